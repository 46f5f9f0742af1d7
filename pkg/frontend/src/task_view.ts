// Client-side state of the task being reviewed: sentence deletions, in-place
// edits, the dirty flag, and the round timer.

import type { DecisionBody, ReviewTask, Verdict } from './api.js';

export interface SentenceState {
  index: number;
  panel: 0 | 1 | 2;
  original: string;
  text: string;
  deleted: boolean;
}

export const PANEL_TITLES = ['Thumbnail Impression', 'Why Zoom', 'Findings'] as const;

export class TaskView {
  readonly task: ReviewTask;
  readonly sentences: SentenceState[];
  readonly startedAtMs: number;
  private readonly now: () => number;

  constructor(task: ReviewTask, now: () => number = () => Date.now()) {
    this.task = task;
    this.now = now;
    this.startedAtMs = now();
    this.sentences = task.draft.sentences.map((text, index) => ({
      index,
      panel: this.panelOf(index, task.panel_sentence_counts),
      original: text,
      text,
      deleted: false,
    }));
  }

  private panelOf(index: number, counts: [number, number, number]): 0 | 1 | 2 {
    if (index < counts[0]) return 0;
    if (index < counts[0] + counts[1]) return 1;
    return 2;
  }

  deleteSentence(index: number): void {
    this.sentences[index].deleted = true;
  }

  restoreSentence(index: number): void {
    this.sentences[index].deleted = false;
  }

  editSentence(index: number, text: string): void {
    this.sentences[index].text = text;
  }

  get deletedIndices(): number[] {
    return this.sentences.filter((s) => s.deleted).map((s) => s.index);
  }

  get textEdited(): boolean {
    return this.sentences.some((s) => s.text !== s.original);
  }

  // Dirty iff any sentence was deleted or edited in place.
  get dirty(): boolean {
    return this.deletedIndices.length > 0 || this.textEdited;
  }

  elapsedMs(): number {
    return this.now() - this.startedAtMs;
  }

  // An accept over a dirty draft is an edit; rejection carries no rationale.
  decisionBody(requested: 'accepted' | 'rejected'): DecisionBody {
    if (requested === 'rejected') {
      return { task_id: this.task.task_id, verdict: 'rejected' };
    }
    const verdict: Verdict = this.dirty ? 'edited' : 'accepted';
    const body: DecisionBody = { task_id: this.task.task_id, verdict };
    if (this.deletedIndices.length > 0) body.deleted_indices = this.deletedIndices;
    if (this.textEdited) body.edited_sentences = this.sentences.map((s) => s.text);
    return body;
  }

  // Rejoin of untouched sentences must equal the served draft text.
  panelText(panel: 0 | 1 | 2): string {
    return this.sentences
      .filter((s) => s.panel === panel && !s.deleted)
      .map((s) => s.text)
      .join('');
  }
}
