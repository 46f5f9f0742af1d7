// Typed client for the review service HTTP API.

export interface DraftRationale {
  thumbnail_impression: string;
  why_zoom: string;
  findings: string;
  sentences: string[];
  source: string;
}

export interface ReviewTask {
  task_id: string;
  case_id: string;
  roi_index: number;
  progress: string;
  thumbnail: string;
  roi_box: Record<string, number>;
  roi_crop: string;
  cyto_crop: string | null;
  draft: DraftRationale;
  panel_sentence_counts: [number, number, number];
  served_at_ms: number;
}

export type Verdict = 'accepted' | 'edited' | 'rejected';

export interface DecisionBody {
  task_id: string;
  verdict: Verdict;
  edited_sentences?: string[];
  deleted_indices?: number[];
}

export interface DecisionEvent {
  task_id: string;
  roi_index: number;
  verdict: Verdict;
  deleted_indices: number[];
  edited_sentences: string[] | null;
  served_at_ms: number;
  decided_at_ms: number;
  reviewer_id: string;
}

export class StaleTaskError extends Error {}

// Next-task outcome: a task, or the terminal all-done state.
export type NextTaskResult = { kind: 'task'; task: ReviewTask } | { kind: 'done' };

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
  ) {}

  private headers(json = false): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers['Content-Type'] = 'application/json';
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    return headers;
  }

  async nextTask(sessionId: string): Promise<NextTaskResult> {
    const response = await fetch(`${this.baseUrl}/api/session/${sessionId}/next`, {
      headers: this.headers(),
    });
    if (response.status === 404) {
      const body = await response.json().catch(() => ({}));
      if (body?.detail === 'no_pending_tasks') return { kind: 'done' };
      throw new Error(`unknown session: ${sessionId}`);
    }
    if (!response.ok) throw new Error(`next task failed: HTTP ${response.status}`);
    return { kind: 'task', task: (await response.json()) as ReviewTask };
  }

  async submitDecision(sessionId: string, body: DecisionBody): Promise<DecisionEvent> {
    const response = await fetch(`${this.baseUrl}/api/session/${sessionId}/decision`, {
      method: 'POST',
      headers: this.headers(true),
      body: JSON.stringify(body),
    });
    if (response.status === 409) throw new StaleTaskError(`task ${body.task_id} is no longer open`);
    if (!response.ok) throw new Error(`decision failed: HTTP ${response.status}`);
    return (await response.json()) as DecisionEvent;
  }

  imageUrl(path: string): string {
    return path ? `${this.baseUrl}/${path.replace(/^\//, '')}` : '';
  }
}
