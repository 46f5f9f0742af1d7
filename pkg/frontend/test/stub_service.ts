// In-process stand-in for the review service: one session of tasks, the same
// next/decision semantics, and a controllable clock shared with the client.

import type { DecisionBody, DecisionEvent, ReviewTask } from '../src/api.js';

export interface StubTaskSpec {
  sentences: string[];
  panelCounts: [number, number, number];
  cytoCrop?: string | null;
}

export class StubService {
  readonly decisions: DecisionEvent[] = [];
  private cursor = 0;
  private openTask: ReviewTask | null = null;
  private nextCalls = 0;
  failNextRequests = 0;

  constructor(
    private readonly specs: StubTaskSpec[],
    private readonly now: () => number,
  ) {}

  get nextCallCount(): number {
    return this.nextCalls;
  }

  private buildTask(index: number): ReviewTask {
    const spec = this.specs[index];
    return {
      task_id: `stub:${index}`,
      case_id: 'case-9',
      roi_index: index,
      progress: `${index + 1} of ${this.specs.length}`,
      thumbnail: 'crops/S1/thumb.png',
      roi_box: { x: 100, y: 100, w: 1000, h: 1000 },
      roi_crop: `crops/S1/roi${index}.png`,
      cyto_crop: spec.cytoCrop === undefined ? `crops/S1/cyto${index}.png` : spec.cytoCrop,
      draft: {
        thumbnail_impression: '',
        why_zoom: '',
        findings: '',
        sentences: spec.sentences,
        source: 'model_draft',
      },
      panel_sentence_counts: spec.panelCounts,
      served_at_ms: this.now(),
    };
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = typeof input === 'string' ? input : input.toString();
    if (this.failNextRequests > 0) {
      this.failNextRequests -= 1;
      throw new TypeError('network unreachable');
    }
    if (url.endsWith('/next')) {
      this.nextCalls += 1;
      if (this.cursor >= this.specs.length) {
        return json({ detail: 'no_pending_tasks' }, 404);
      }
      if (!this.openTask) this.openTask = this.buildTask(this.cursor);
      return json(this.openTask, 200);
    }
    if (url.endsWith('/decision')) {
      const body = JSON.parse(String(init?.body)) as DecisionBody;
      if (!this.openTask || this.openTask.task_id !== body.task_id) {
        return json({ detail: 'stale task' }, 409);
      }
      const event: DecisionEvent = {
        task_id: body.task_id,
        roi_index: this.openTask.roi_index,
        verdict: body.verdict,
        deleted_indices: body.deleted_indices ?? [],
        edited_sentences: body.edited_sentences ?? null,
        served_at_ms: this.openTask.served_at_ms,
        decided_at_ms: this.now(),
        reviewer_id: 'stub-reviewer',
      };
      this.decisions.push(event);
      this.openTask = null;
      this.cursor += 1;
      return json(event, 200);
    }
    return json({ detail: 'not found' }, 404);
  };
}

function json(body: unknown, status: number): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}
