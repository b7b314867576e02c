/**
 * Three-step annotation wizard.
 *
 * Step 1 shows only the physician profile and trait definition (model
 * outputs are withheld by the server until the independent judgment is
 * submitted). Step 2 renders one rating card per anonymized output with a
 * live composite preview. Step 3 collects the consensus verdict. All
 * submissions go through the service; server errors surface inline, and an
 * E_ORDER or E_CONFLICT response resynchronizes the wizard from the server.
 */

import { AnnotationApi, ApiError, Step1Payload, Step2Payload, Step3Payload, TaskView } from "./api.js";
import { compositeScore, DIMENSIONS, DIMENSION_TITLES, Dimension } from "./composite.js";
import { DraftStore } from "./drafts.js";

export const SCORE_LABELS = [
  "No Evidence", "Low", "Low to Moderate", "Moderate", "Moderate to High", "High",
] as const;

export const QUALITY_LABELS = ["Low", "Moderate", "High"] as const;

export interface WizardConfig {
  /** the rubric weights are public, but the preview can anchor raters */
  showCompositePreview: boolean;
}

export const DEFAULT_CONFIG: WizardConfig = { showCompositePreview: true };

interface Step1Draft {
  score_label: string;
  evidence: string;
  consistency: string;
  sufficiency: string;
}

interface Step2Draft {
  ratings: Record<string, Partial<Record<Dimension, number>> & { feedback?: string }>;
}

interface Step3Draft {
  consensus_label: string;
  agreement: number;
  reliability: number;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document, tag: K, attrs: Record<string, string> = {}, text = "",
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

function radioGroup(doc: Document, name: string, labels: readonly string[],
                    selected: string | null, disabled: boolean): HTMLElement {
  const wrap = el(doc, "div", { class: "radio-group", "data-group": name });
  for (const label of labels) {
    const lab = el(doc, "label");
    const input = el(doc, "input", {
      type: "radio", name, value: label,
    }) as HTMLInputElement;
    input.checked = selected === label;
    input.disabled = disabled;
    lab.appendChild(input);
    lab.appendChild(doc.createTextNode(` ${label}`));
    wrap.appendChild(lab);
  }
  return wrap;
}

function groupValue(root: HTMLElement, name: string): string | null {
  const checked = root.querySelector<HTMLInputElement>(
    `input[name="${name}"]:checked`,
  );
  return checked ? checked.value : null;
}

export class Wizard {
  private root: HTMLElement;
  private doc: Document;
  private task: TaskView | null = null;
  private finished = false;

  constructor(
    root: HTMLElement,
    private api: AnnotationApi,
    private drafts: DraftStore,
    private config: WizardConfig = DEFAULT_CONFIG,
  ) {
    this.root = root;
    this.doc = root.ownerDocument;
  }

  /** Fetch the current task from the server and render whatever step it expects. */
  async sync(): Promise<void> {
    try {
      this.task = await this.api.nextTask();
      this.finished = false;
    } catch (err) {
      if (err instanceof ApiError && err.code === "E_DONE") {
        this.task = null;
        this.finished = true;
        await this.renderAllDone();
        return;
      }
      throw err;
    }
    this.render();
  }

  get currentTask(): TaskView | null {
    return this.task;
  }

  get isFinished(): boolean {
    return this.finished;
  }

  private render(): void {
    const task = this.task;
    if (!task) {
      return;
    }
    this.root.textContent = "";
    const header = el(this.doc, "header");
    header.appendChild(el(this.doc, "h1", {}, `Trait: ${task.trait}`));
    header.appendChild(
      el(this.doc, "p", { class: "trait-definition" }, task.trait_definition),
    );
    header.appendChild(
      el(this.doc, "p", { class: "step-indicator" }, `Step ${task.step} of 3`),
    );
    this.root.appendChild(header);

    const profile = el(this.doc, "section", { class: "profile" });
    profile.appendChild(el(this.doc, "h2", {}, `Reviews for ${task.physician_name}`));
    profile.appendChild(el(this.doc, "pre", { class: "profile-body" }, task.profile));
    this.root.appendChild(profile);

    if (task.step === 1) {
      this.renderStep1(task);
    } else if (task.step === 2) {
      this.renderStep2(task);
    } else {
      this.renderStep3(task);
    }
  }

  private errorBox(): HTMLElement {
    let box = this.root.querySelector<HTMLElement>(".error-box");
    if (!box) {
      box = el(this.doc, "div", { class: "error-box", role: "alert" });
      this.root.appendChild(box);
    }
    return box;
  }

  private async surface(err: unknown): Promise<void> {
    if (err instanceof ApiError) {
      this.errorBox().textContent = `${err.code}: ${err.message}`;
      if (err.code === "E_ORDER" || err.code === "E_CONFLICT") {
        // wizard state drifted from the server; resync
        await this.sync();
      }
      return;
    }
    throw err;
  }

  // -- step 1 ---------------------------------------------------------------

  private renderStep1(task: TaskView): void {
    const form = el(this.doc, "form", { class: "step1" });
    const draft = this.drafts.load<Step1Draft>(task.task_id, 1);

    form.appendChild(el(this.doc, "h2", {}, "Step 1: Independent judgment"));
    form.appendChild(el(this.doc, "p", {},
      "Assess the trait from the reviews alone. Model outputs stay hidden until you submit."));

    form.appendChild(el(this.doc, "h3", {}, "Score"));
    form.appendChild(radioGroup(this.doc, "score", SCORE_LABELS,
      draft?.score_label ?? null, false));

    form.appendChild(el(this.doc, "h3", {}, "Evidence"));
    const evidence = el(this.doc, "textarea", {
      name: "evidence", rows: "4",
      placeholder: "2-3 sentences grounding your judgment in the reviews",
    }) as HTMLTextAreaElement;
    evidence.value = draft?.evidence ?? "";
    form.appendChild(evidence);

    form.appendChild(el(this.doc, "h3", {}, "Consistency"));
    form.appendChild(radioGroup(this.doc, "consistency", QUALITY_LABELS,
      draft?.consistency ?? null, false));
    form.appendChild(el(this.doc, "h3", {}, "Sufficiency"));
    form.appendChild(radioGroup(this.doc, "sufficiency", QUALITY_LABELS,
      draft?.sufficiency ?? null, false));

    const submit = el(this.doc, "button", { type: "submit", name: "submit-step1" },
      "Submit step 1") as HTMLButtonElement;
    form.appendChild(submit);
    const hint = el(this.doc, "p", { class: "validation-hint" });
    form.appendChild(hint);

    const validate = () => {
      const score = groupValue(form, "score");
      const cons = groupValue(form, "consistency");
      const suff = groupValue(form, "sufficiency");
      const needsEvidence = score !== null && score !== "No Evidence";
      const missingEvidence = needsEvidence && evidence.value.trim() === "";
      submit.disabled = !score || !cons || !suff || missingEvidence;
      hint.textContent = missingEvidence
        ? "Evidence is required unless the score is No Evidence."
        : "";
    };
    form.addEventListener("input", () => {
      validate();
      this.drafts.save(task.task_id, 1, this.collectStep1(form, evidence));
    });
    validate();

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitStep1(task, this.collectStep1(form, evidence));
    });
    this.root.appendChild(form);
  }

  private collectStep1(form: HTMLElement, evidence: HTMLTextAreaElement): Step1Draft {
    return {
      score_label: groupValue(form, "score") ?? "",
      evidence: evidence.value,
      consistency: groupValue(form, "consistency") ?? "",
      sufficiency: groupValue(form, "sufficiency") ?? "",
    };
  }

  async submitStep1(task: TaskView, draft: Step1Draft): Promise<void> {
    const payload: Step1Payload = { v: 1, ...draft, evidence: draft.evidence.trim() };
    try {
      await this.api.submitStep1(task.task_id, payload);
      await this.sync();
    } catch (err) {
      await this.surface(err);
    }
  }

  // -- step 2 ---------------------------------------------------------------

  private renderStep2(task: TaskView): void {
    const outputs = task.outputs ?? [];
    const form = el(this.doc, "form", { class: "step2" });
    const draft = this.drafts.load<Step2Draft>(task.task_id, 2) ?? { ratings: {} };

    form.appendChild(el(this.doc, "h2", {}, "Step 2: Rate each model output"));
    for (const output of outputs) {
      const card = el(this.doc, "fieldset", {
        class: "model-card", "data-label": output.label,
      });
      card.appendChild(el(this.doc, "legend", {}, output.label));
      card.appendChild(el(this.doc, "pre", { class: "assessment" }, output.assessment_xml));

      for (const dim of DIMENSIONS) {
        const row = el(this.doc, "div", { class: "dimension-row" });
        const id = `${output.label}-${dim}`.replace(/\s+/g, "-");
        row.appendChild(el(this.doc, "label", { for: id }, DIMENSION_TITLES[dim]));
        const slider = el(this.doc, "input", {
          type: "range", min: "0", max: "10", step: "1", id,
          name: id, "data-card": output.label, "data-dimension": dim,
        }) as HTMLInputElement;
        const saved = draft.ratings[output.label]?.[dim];
        slider.value = saved === undefined ? "" : String(saved);
        // a slider reports "5" even before the user touches it; track intent
        slider.dataset.touched = saved === undefined ? "false" : "true";
        row.appendChild(slider);
        row.appendChild(el(this.doc, "output", { for: id, class: "dim-value" },
          saved === undefined ? "-" : String(saved)));
        card.appendChild(row);
      }

      const feedback = el(this.doc, "textarea", {
        class: "feedback", rows: "2", "data-card": output.label,
        placeholder: "Short critique (optional)",
      }) as HTMLTextAreaElement;
      feedback.value = draft.ratings[output.label]?.feedback ?? "";
      card.appendChild(feedback);

      if (this.config.showCompositePreview) {
        const preview = el(this.doc, "p", {
          class: "composite-preview", "data-card": output.label,
        }, "Composite: -");
        card.appendChild(preview);
      }
      form.appendChild(card);
    }

    const submit = el(this.doc, "button", { type: "submit", name: "submit-step2" },
      "Submit step 2") as HTMLButtonElement;
    form.appendChild(submit);

    const update = () => {
      let complete = true;
      for (const output of outputs) {
        const values: Partial<Record<Dimension, number>> = {};
        let cardComplete = true;
        for (const dim of DIMENSIONS) {
          const slider = form.querySelector<HTMLInputElement>(
            `input[data-card="${output.label}"][data-dimension="${dim}"]`,
          )!;
          if (slider.dataset.touched !== "true") {
            cardComplete = false;
          } else {
            values[dim] = Number(slider.value);
          }
        }
        if (this.config.showCompositePreview) {
          const preview = form.querySelector<HTMLElement>(
            `.composite-preview[data-card="${output.label}"]`,
          )!;
          preview.textContent = cardComplete
            ? `Composite: ${compositeScore(values as Record<Dimension, number>).toFixed(2)}`
            : "Composite: -";
        }
        complete = complete && cardComplete;
      }
      submit.disabled = !complete;
    };
    form.addEventListener("input", (event) => {
      const target = event.target as HTMLElement;
      if (target instanceof HTMLInputElement && target.type === "range") {
        target.dataset.touched = "true";
        const out = target.parentElement?.querySelector("output");
        if (out) {
          out.textContent = target.value;
        }
      }
      update();
      this.drafts.save(task.task_id, 2, this.collectStep2(form, outputs.map(o => o.label)));
    });
    update();

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitStep2(task, this.collectStep2(form, outputs.map(o => o.label)));
    });
    this.root.appendChild(form);
  }

  private collectStep2(form: HTMLElement, labels: string[]): Step2Draft {
    const ratings: Step2Draft["ratings"] = {};
    for (const label of labels) {
      const entry: Step2Draft["ratings"][string] = {};
      for (const dim of DIMENSIONS) {
        const slider = form.querySelector<HTMLInputElement>(
          `input[data-card="${label}"][data-dimension="${dim}"]`,
        )!;
        if (slider.dataset.touched === "true") {
          entry[dim] = Number(slider.value);
        }
      }
      const feedback = form.querySelector<HTMLTextAreaElement>(
        `textarea.feedback[data-card="${label}"]`,
      )!;
      entry.feedback = feedback.value;
      ratings[label] = entry;
    }
    return { ratings };
  }

  async submitStep2(task: TaskView, draft: Step2Draft): Promise<void> {
    const ratings: Step2Payload["ratings"] = {};
    for (const [label, entry] of Object.entries(draft.ratings)) {
      ratings[label] = {
        evidence_quality: entry.evidence_quality ?? 0,
        reasoning_clarity: entry.reasoning_clarity ?? 0,
        trait_understanding: entry.trait_understanding ?? 0,
        evidence_specificity: entry.evidence_specificity ?? 0,
        conclusion_accuracy: entry.conclusion_accuracy ?? 0,
        feedback: entry.feedback ?? "",
      };
    }
    try {
      await this.api.submitStep2(task.task_id, { v: 1, ratings });
      await this.sync();
    } catch (err) {
      await this.surface(err);
    }
  }

  // -- step 3 ---------------------------------------------------------------

  private renderStep3(task: TaskView): void {
    const form = el(this.doc, "form", { class: "step3" });
    const draft = this.drafts.load<Step3Draft>(task.task_id, 3);

    form.appendChild(el(this.doc, "h2", {}, "Step 3: Consensus"));

    if (task.own_step1) {
      const summary = el(this.doc, "section", { class: "own-summary" });
      summary.appendChild(el(this.doc, "h3", {}, "Your step-1 judgment"));
      summary.appendChild(el(this.doc, "p", {},
        `${task.own_step1.score_label} (consistency ${task.own_step1.consistency}, ` +
        `sufficiency ${task.own_step1.sufficiency})`));
      form.appendChild(summary);
    }
    for (const output of task.outputs ?? []) {
      const panel = el(this.doc, "details", { class: "output-review" });
      panel.appendChild(el(this.doc, "summary", {}, output.label));
      panel.appendChild(el(this.doc, "pre", {}, output.assessment_xml));
      form.appendChild(panel);
    }

    form.appendChild(el(this.doc, "h3", {}, "Consensus score"));
    form.appendChild(radioGroup(this.doc, "consensus", SCORE_LABELS,
      draft?.consensus_label ?? null, false));

    const sliders: Record<string, HTMLInputElement> = {};
    for (const name of ["agreement", "reliability"] as const) {
      form.appendChild(el(this.doc, "h3", {},
        name === "agreement" ? "Cross-model agreement" : "Reliability"));
      const slider = el(this.doc, "input", {
        type: "range", min: "0", max: "1", step: "0.01", name,
      }) as HTMLInputElement;
      slider.value = draft ? String(draft[name]) : "0.5";
      form.appendChild(slider);
      form.appendChild(el(this.doc, "output", { class: `${name}-value` }, slider.value));
      sliders[name] = slider;
    }

    const submit = el(this.doc, "button", { type: "submit", name: "submit-step3" },
      "Submit step 3") as HTMLButtonElement;
    form.appendChild(submit);

    const validate = () => {
      submit.disabled = groupValue(form, "consensus") === null;
    };
    form.addEventListener("input", (event) => {
      const target = event.target as HTMLElement;
      if (target instanceof HTMLInputElement && target.type === "range") {
        const out = target.nextElementSibling;
        if (out && out.tagName === "OUTPUT") {
          out.textContent = target.value;
        }
      }
      validate();
      this.drafts.save(task.task_id, 3, {
        consensus_label: groupValue(form, "consensus") ?? "",
        agreement: Number(sliders.agreement.value),
        reliability: Number(sliders.reliability.value),
      });
    });
    validate();

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitStep3(task, {
        v: 1,
        consensus_label: groupValue(form, "consensus") ?? "",
        agreement: Number(sliders.agreement.value),
        reliability: Number(sliders.reliability.value),
      });
    });
    this.root.appendChild(form);
  }

  async submitStep3(task: TaskView, payload: Step3Payload): Promise<void> {
    try {
      await this.api.submitStep3(task.task_id, payload);
      this.drafts.clear(task.task_id);
      await this.sync();
    } catch (err) {
      await this.surface(err);
    }
  }

  private async renderAllDone(): Promise<void> {
    const progress = await this.api.progress();
    this.root.textContent = "";
    const section = el(this.doc, "section", { class: "all-done" });
    section.appendChild(el(this.doc, "h1", {}, "All tasks complete"));
    const pct = progress.total === 0
      ? 100
      : Math.round((100 * progress.done) / progress.total);
    section.appendChild(el(this.doc, "p", { class: "progress" },
      `Progress: ${progress.done}/${progress.total} (${pct}%)`));
    this.root.appendChild(section);
  }
}
