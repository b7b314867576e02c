/** Typed client over the annotation service JSON API (the only backend surface). */

export interface TaskOutput {
  label: string;
  assessment_xml: string;
  reasoning: string;
}

export interface TaskView {
  v: number;
  task_id: string;
  step: 1 | 2 | 3;
  trait: string;
  trait_definition: string;
  physician_name: string;
  profile: string;
  calibration: boolean;
  outputs?: TaskOutput[];
  rubric_weights?: Record<string, number>;
  own_step1?: Step1Payload;
  own_step2?: Step2Payload;
}

export interface Step1Payload {
  v: number;
  score_label: string;
  evidence: string;
  consistency: string;
  sufficiency: string;
}

export interface Step2Rating {
  evidence_quality: number;
  reasoning_clarity: number;
  trait_understanding: number;
  evidence_specificity: number;
  conclusion_accuracy: number;
  feedback: string;
}

export interface Step2Payload {
  v: number;
  ratings: Record<string, Step2Rating>;
}

export interface Step3Payload {
  v: number;
  consensus_label: string;
  agreement: number;
  reliability: number;
}

export interface Progress {
  v: number;
  done: number;
  total: number;
}

export interface ApiErrorBody {
  v: number;
  error: { code: string; message: string };
}

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export class AnnotationApi {
  constructor(
    private baseUrl: string,
    private token: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "E_HTTP";
      let message = `HTTP ${response.status}`;
      try {
        const parsed = (await response.json()) as ApiErrorBody;
        if (parsed?.error) {
          code = parsed.error.code;
          message = parsed.error.message;
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  openSession(): Promise<{ v: number; annotator_id: string; progress: Progress }> {
    return this.request("POST", "/api/sessions");
  }

  nextTask(): Promise<TaskView> {
    return this.request("GET", "/api/tasks/next");
  }

  submitStep1(taskId: string, payload: Step1Payload): Promise<unknown> {
    return this.request("POST", `/api/tasks/${taskId}/step1`, payload);
  }

  submitStep2(taskId: string, payload: Step2Payload): Promise<unknown> {
    return this.request("POST", `/api/tasks/${taskId}/step2`, payload);
  }

  submitStep3(taskId: string, payload: Step3Payload): Promise<{ progress: Progress }> {
    return this.request("POST", `/api/tasks/${taskId}/step3`, payload);
  }

  progress(): Promise<Progress> {
    return this.request("GET", "/api/progress");
  }
}
