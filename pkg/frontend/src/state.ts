/**
 * Wizard state machine.
 *
 * The only legal forward path is step1 -> step2 -> step3 -> done, and every
 * advance requires a server acknowledgment; the machine refuses anything
 * else. Back-navigation just changes which (read-only) step is displayed.
 */

export type WizardStep = 1 | 2 | 3;

export interface WizardState {
  taskId: string | null;
  /** step the server is waiting on */
  serverStep: WizardStep | "done" | "all-done";
  /** step currently rendered; may be < serverStep when reviewing */
  viewStep: WizardStep;
}

export function initialState(): WizardState {
  return { taskId: null, serverStep: 1, viewStep: 1 };
}

export function loadTask(state: WizardState, taskId: string, serverStep: WizardStep): WizardState {
  return { taskId, serverStep, viewStep: serverStep };
}

export function stepAccepted(state: WizardState): WizardState {
  if (state.serverStep === "done" || state.serverStep === "all-done") {
    throw new Error("no step to accept on a finished task");
  }
  const next = state.serverStep === 3 ? "done" : ((state.serverStep + 1) as WizardStep);
  return {
    ...state,
    serverStep: next,
    viewStep: next === "done" ? state.viewStep : next,
  };
}

export function viewEarlierStep(state: WizardState, step: WizardStep): WizardState {
  const current = state.serverStep === "done" || state.serverStep === "all-done"
    ? 4
    : state.serverStep;
  if (step > current) {
    throw new Error(`cannot view step ${step}; server is at ${state.serverStep}`);
  }
  return { ...state, viewStep: step };
}

/** True when inputs on the rendered step should be editable. */
export function isEditable(state: WizardState): boolean {
  return state.serverStep === state.viewStep;
}

export function allDone(state: WizardState): WizardState {
  return { ...state, serverStep: "all-done", taskId: null };
}
