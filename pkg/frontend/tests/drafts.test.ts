import { beforeEach, describe, expect, it } from "vitest";

import { localDrafts } from "../src/drafts.js";

describe("draft autosave", () => {
  beforeEach(() => {
    window.localStorage.clear();
  });

  it("round-trips a draft per task and step", () => {
    const drafts = localDrafts(window.localStorage);
    drafts.save("t1", 1, { score_label: "High", evidence: "saved mid-session" });
    const restored = drafts.load<{ score_label: string; evidence: string }>("t1", 1);
    expect(restored).toEqual({ score_label: "High", evidence: "saved mid-session" });
  });

  it("keeps tasks and steps isolated", () => {
    const drafts = localDrafts(window.localStorage);
    drafts.save("t1", 1, { a: 1 });
    drafts.save("t1", 2, { b: 2 });
    drafts.save("t2", 1, { c: 3 });
    expect(drafts.load("t1", 1)).toEqual({ a: 1 });
    expect(drafts.load("t1", 2)).toEqual({ b: 2 });
    expect(drafts.load("t2", 1)).toEqual({ c: 3 });
    expect(drafts.load("t2", 2)).toBeNull();
  });

  it("clear removes every step of one task only", () => {
    const drafts = localDrafts(window.localStorage);
    drafts.save("t1", 1, { a: 1 });
    drafts.save("t1", 3, { b: 2 });
    drafts.save("t2", 1, { keep: true });
    drafts.clear("t1");
    expect(drafts.load("t1", 1)).toBeNull();
    expect(drafts.load("t1", 3)).toBeNull();
    expect(drafts.load("t2", 1)).toEqual({ keep: true });
  });

  it("survives corrupted entries", () => {
    window.localStorage.setItem("revtraits.annotation.draft.v1.t9.step1", "{broken");
    const drafts = localDrafts(window.localStorage);
    expect(drafts.load("t9", 1)).toBeNull();
  });
});
