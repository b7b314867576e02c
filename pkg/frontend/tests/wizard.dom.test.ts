import { beforeEach, describe, expect, it } from "vitest";

import { AnnotationApi } from "../src/api.js";
import { localDrafts } from "../src/drafts.js";
import { compositeScore, DIMENSIONS } from "../src/composite.js";
import { Wizard } from "../src/wizard.js";
import { FakeService, sampleTask } from "./fake_service.js";

function mount(): HTMLElement {
  document.body.innerHTML = '<main id="app"></main>';
  return document.getElementById("app")!;
}

function wizardWith(service: FakeService): Wizard {
  window.localStorage.clear();
  // the fake service implements the same call surface as AnnotationApi
  return new Wizard(
    mount(),
    service as unknown as AnnotationApi,
    localDrafts(window.localStorage),
  );
}

function setRadio(root: HTMLElement, name: string, value: string): void {
  const input = root.querySelector<HTMLInputElement>(
    `input[name="${name}"][value="${value}"]`,
  )!;
  input.checked = true;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

function setSlider(root: HTMLElement, card: string, dimension: string, value: number): void {
  const slider = root.querySelector<HTMLInputElement>(
    `input[data-card="${card}"][data-dimension="${dimension}"]`,
  )!;
  slider.value = String(value);
  slider.dispatchEvent(new Event("input", { bubbles: true }));
}

async function submitForm(root: HTMLElement, selector: string): Promise<void> {
  const form = root.querySelector<HTMLFormElement>(selector)!;
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
  // submit handlers are async; give the microtask queue a few turns
  for (let i = 0; i < 10; i++) {
    await Promise.resolve();
  }
}

describe("wizard DOM flow", () => {
  let service: FakeService;
  let root: HTMLElement;
  let wizard: Wizard;

  beforeEach(async () => {
    service = new FakeService([sampleTask("t1")]);
    wizard = wizardWith(service);
    root = document.getElementById("app")!;
    await wizard.sync();
  });

  it("step 1 shows only profile and trait definition, no model outputs", () => {
    expect(root.querySelector(".step1")).not.toBeNull();
    expect(root.querySelector(".model-card")).toBeNull();
    expect(root.textContent).toContain("Jane Smith");
    expect(root.textContent).toContain("Reflects intellectual curiosity");
    expect(root.textContent).not.toContain("Model A");
  });

  it("blocks step-1 submit until evidence accompanies a scored trait", () => {
    const submit = root.querySelector<HTMLButtonElement>(
      'button[name="submit-step1"]',
    )!;
    expect(submit.disabled).toBe(true);
    setRadio(root, "score", "High");
    setRadio(root, "consistency", "High");
    setRadio(root, "sufficiency", "Moderate");
    expect(submit.disabled).toBe(true); // evidence still empty
    expect(root.querySelector(".validation-hint")!.textContent).toContain(
      "Evidence is required",
    );
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "Quotes describing curiosity.";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));
    expect(submit.disabled).toBe(false);
  });

  it("allows No Evidence without evidence text", () => {
    setRadio(root, "score", "No Evidence");
    setRadio(root, "consistency", "Low");
    setRadio(root, "sufficiency", "Low");
    const submit = root.querySelector<HTMLButtonElement>(
      'button[name="submit-step1"]',
    )!;
    expect(submit.disabled).toBe(false);
  });

  it("walks the full three-step flow and reaches the completion screen", async () => {
    setRadio(root, "score", "High");
    setRadio(root, "consistency", "High");
    setRadio(root, "sufficiency", "Moderate");
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "Strong evidence of curiosity.";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));
    await submitForm(root, "form.step1");

    // step 2 now shows one card per anonymized output, in server order
    const cards = [...root.querySelectorAll(".model-card")];
    expect(cards.map((c) => c.getAttribute("data-label"))).toEqual([
      "Model A", "Model B",
    ]);
    const submit2 = root.querySelector<HTMLButtonElement>(
      'button[name="submit-step2"]',
    )!;
    expect(submit2.disabled).toBe(true); // no slider touched yet
    for (const label of ["Model A", "Model B"]) {
      for (const dim of DIMENSIONS) {
        setSlider(root, label, dim, 7);
      }
    }
    expect(submit2.disabled).toBe(false);
    await submitForm(root, "form.step2");

    // step 3: consensus form with own-step1 summary
    expect(root.querySelector(".step3")).not.toBeNull();
    expect(root.textContent).toContain("Your step-1 judgment");
    setRadio(root, "consensus", "Moderate to High");
    await submitForm(root, "form.step3");

    expect(root.querySelector(".all-done")).not.toBeNull();
    expect(root.textContent).toContain("Progress: 1/1 (100%)");
    expect(service.submissions.map((s) => s.step)).toEqual([1, 2, 3]);
  });

  it("live composite preview equals the rubric arithmetic", async () => {
    setRadio(root, "score", "High");
    setRadio(root, "consistency", "High");
    setRadio(root, "sufficiency", "High");
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "e";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));
    await submitForm(root, "form.step1");

    const values = {
      evidence_quality: 8, reasoning_clarity: 6, trait_understanding: 9,
      evidence_specificity: 4, conclusion_accuracy: 7,
    };
    for (const [dim, value] of Object.entries(values)) {
      setSlider(root, "Model A", dim, value);
    }
    const preview = root.querySelector<HTMLElement>(
      '.composite-preview[data-card="Model A"]',
    )!;
    expect(preview.textContent).toBe(
      `Composite: ${compositeScore(values).toFixed(2)}`,
    );
    // Model B untouched: preview stays undefined and submit stays blocked
    const previewB = root.querySelector<HTMLElement>(
      '.composite-preview[data-card="Model B"]',
    )!;
    expect(previewB.textContent).toBe("Composite: -");
    expect(
      root.querySelector<HTMLButtonElement>('button[name="submit-step2"]')!.disabled,
    ).toBe(true);
  });

  it("never renders a model identity at any step", async () => {
    const forbidden = ["scripted:", "gpt", "claude", "gemini"];
    const scan = () => {
      const html = document.body.innerHTML.toLowerCase();
      for (const needle of forbidden) {
        expect(html).not.toContain(needle);
      }
    };
    scan();
    setRadio(root, "score", "High");
    setRadio(root, "consistency", "High");
    setRadio(root, "sufficiency", "High");
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "e";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));
    await submitForm(root, "form.step1");
    scan();
    for (const label of ["Model A", "Model B"]) {
      for (const dim of DIMENSIONS) {
        setSlider(root, label, dim, 5);
      }
    }
    await submitForm(root, "form.step2");
    scan();
    setRadio(root, "consensus", "Moderate");
    await submitForm(root, "form.step3");
    scan();
  });

  it("restores drafts after a simulated refresh", async () => {
    setRadio(root, "score", "Moderate");
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "half-written note";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));

    // refresh: a new wizard over the same storage and service
    const revived = new Wizard(
      mount(),
      service as unknown as AnnotationApi,
      localDrafts(window.localStorage),
    );
    await revived.sync();
    const freshRoot = document.getElementById("app")!;
    expect(
      freshRoot.querySelector<HTMLInputElement>(
        'input[name="score"][value="Moderate"]',
      )!.checked,
    ).toBe(true);
    expect(
      freshRoot.querySelector<HTMLTextAreaElement>('textarea[name="evidence"]')!.value,
    ).toBe("half-written note");
  });

  it("resyncs from the server on E_ORDER instead of getting stuck", async () => {
    // sneak the task past step 1 behind the wizard's back
    await service.submitStep1("t1", {
      v: 1, score_label: "High", evidence: "x",
      consistency: "High", sufficiency: "High",
    });
    // the rendered step-1 form now submits out of order
    setRadio(root, "score", "High");
    setRadio(root, "consistency", "High");
    setRadio(root, "sufficiency", "High");
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "stale";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));
    await submitForm(root, "form.step1");
    // E_CONFLICT surfaced, then the wizard resynced to the server's step 2
    expect(root.querySelector(".step2")).not.toBeNull();
  });
});

describe("wizard with composite preview disabled", () => {
  it("renders no preview elements", async () => {
    const service = new FakeService([sampleTask("t1")]);
    window.localStorage.clear();
    const wizard = new Wizard(
      mount(),
      service as unknown as AnnotationApi,
      localDrafts(window.localStorage),
      { showCompositePreview: false },
    );
    await wizard.sync();
    const root = document.getElementById("app")!;
    setRadio(root, "score", "High");
    setRadio(root, "consistency", "High");
    setRadio(root, "sufficiency", "High");
    const evidence = root.querySelector<HTMLTextAreaElement>(
      'textarea[name="evidence"]',
    )!;
    evidence.value = "e";
    evidence.dispatchEvent(new Event("input", { bubbles: true }));
    await submitForm(root, "form.step1");
    expect(root.querySelector(".composite-preview")).toBeNull();
  });
});
