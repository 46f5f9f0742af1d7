// DOM wiring: renders the review layout and drives the task lifecycle.
//
// Layout mirrors the review tool: a header with case id, ROI index, progress,
// elapsed time, and decision state; three image panes (thumbnail with the ROI
// box, zoomed ROI, optional cytology crop); and three text panels whose draft
// sentences are individually deletable paragraphs with one-click delete.
// Keyboard shortcuts: A accept, R reject, N next (accepts unless rejected).

import { ReviewApi, StaleTaskError, type ReviewTask } from './api.js';
import { PANEL_TITLES, TaskView } from './task_view.js';

export interface AppOptions {
  now?: () => number;
  tickMs?: number;
}

export class ReviewApp {
  private view: TaskView | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly now: () => number;
  private readonly tickMs: number;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
    private readonly sessionId: string,
    options: AppOptions = {},
  ) {
    this.now = options.now ?? (() => Date.now());
    this.tickMs = options.tickMs ?? 1000;
    this.onKeydown = this.onKeydown.bind(this);
  }

  async start(): Promise<void> {
    this.root.ownerDocument.addEventListener('keydown', this.onKeydown);
    await this.loadNextTask();
  }

  stop(): void {
    this.root.ownerDocument.removeEventListener('keydown', this.onKeydown);
    this.clearTimer();
  }

  get currentView(): TaskView | null {
    return this.view;
  }

  async loadNextTask(): Promise<void> {
    this.clearTimer();
    this.view = null;
    let result;
    try {
      result = await this.api.nextTask(this.sessionId);
    } catch (err) {
      this.renderRetry(err instanceof Error ? err.message : String(err));
      return;
    }
    if (result.kind === 'done') {
      this.renderDone();
      return;
    }
    this.view = new TaskView(result.task, this.now);
    this.renderTask(result.task);
    this.timer = setInterval(() => this.updateElapsed(), this.tickMs);
  }

  async accept(): Promise<void> {
    await this.submit('accepted');
  }

  async reject(): Promise<void> {
    await this.submit('rejected');
  }

  // "Next" records the current decision state: acceptance unless rejected.
  async next(): Promise<void> {
    await this.submit('accepted');
  }

  private async submit(requested: 'accepted' | 'rejected'): Promise<void> {
    if (!this.view) return;
    const body = this.view.decisionBody(requested);
    this.setDecisionState(body.verdict);
    try {
      await this.api.submitDecision(this.sessionId, body);
    } catch (err) {
      if (err instanceof StaleTaskError) {
        this.renderRetry('This task was already decided elsewhere. Reload to continue.');
        return;
      }
      throw err;
    }
    await this.loadNextTask();
  }

  private onKeydown(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && target.isContentEditable) return; // typing in a sentence
    const key = event.key.toLowerCase();
    if (key === 'a') void this.accept();
    else if (key === 'r') void this.reject();
    else if (key === 'n') void this.next();
  }

  // --- rendering -----------------------------------------------------------

  private renderTask(task: ReviewTask): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = '';

    const header = doc.createElement('header');
    header.className = 'review-header';
    header.append(
      this.headerItem(doc, 'case', `Case ${task.case_id}`),
      this.headerItem(doc, 'roi', `ROI ${task.roi_index}`),
      this.headerItem(doc, 'progress', task.progress),
      this.headerItem(doc, 'elapsed', '0 s'),
      this.headerItem(doc, 'decision-state', 'undecided'),
    );
    this.root.append(header);

    const panes = doc.createElement('div');
    panes.className = 'image-panes';
    panes.append(
      this.imagePane(doc, 'thumbnail', task.thumbnail, task.roi_box),
      this.imagePane(doc, 'roi', task.roi_crop, null),
    );
    if (task.cyto_crop) panes.append(this.imagePane(doc, 'cyto', task.cyto_crop, null));
    this.root.append(panes);

    const panels = doc.createElement('div');
    panels.className = 'text-panels';
    PANEL_TITLES.forEach((title, panelIndex) => {
      panels.append(this.textPanel(doc, title, panelIndex as 0 | 1 | 2));
    });
    this.root.append(panels);

    const controls = doc.createElement('div');
    controls.className = 'controls';
    controls.append(
      this.button(doc, 'accept', 'Accept', () => void this.accept()),
      this.button(doc, 'reject', 'Reject', () => void this.reject()),
      this.button(doc, 'next', 'Next', () => void this.next()),
    );
    this.root.append(controls);
  }

  private headerItem(doc: Document, cls: string, text: string): HTMLElement {
    const span = doc.createElement('span');
    span.className = cls;
    span.textContent = text;
    return span;
  }

  private imagePane(
    doc: Document,
    cls: string,
    path: string,
    roiBox: Record<string, number> | null,
  ): HTMLElement {
    const pane = doc.createElement('figure');
    pane.className = `pane ${cls}`;
    const img = doc.createElement('img');
    img.src = this.api.imageUrl(path);
    img.alt = cls;
    pane.append(img);
    if (roiBox && Object.keys(roiBox).length > 0) {
      const overlay = doc.createElement('div');
      overlay.className = 'roi-box';
      overlay.dataset.box = JSON.stringify(roiBox);
      pane.append(overlay);
    }
    return pane;
  }

  private textPanel(doc: Document, title: string, panel: 0 | 1 | 2): HTMLElement {
    const section = doc.createElement('section');
    section.className = 'panel';
    const heading = doc.createElement('h3');
    heading.textContent = title;
    section.append(heading);
    for (const sentence of this.view!.sentences) {
      if (sentence.panel !== panel) continue;
      section.append(this.sentenceParagraph(doc, sentence.index));
    }
    return section;
  }

  private sentenceParagraph(doc: Document, index: number): HTMLElement {
    const view = this.view!;
    const wrapper = doc.createElement('div');
    wrapper.className = 'sentence';
    wrapper.dataset.index = String(index);

    const text = doc.createElement('p');
    text.textContent = view.sentences[index].text;
    text.contentEditable = 'true';
    text.addEventListener('input', () => {
      view.editSentence(index, text.textContent ?? '');
    });

    const remove = doc.createElement('button');
    remove.className = 'delete';
    remove.textContent = '×';
    remove.title = 'Delete sentence';
    remove.addEventListener('click', () => {
      view.deleteSentence(index);
      wrapper.classList.add('deleted');
      text.contentEditable = 'false';
    });

    wrapper.append(text, remove);
    return wrapper;
  }

  private button(doc: Document, cls: string, label: string, onClick: () => void): HTMLElement {
    const button = doc.createElement('button');
    button.className = cls;
    button.textContent = label;
    button.addEventListener('click', onClick);
    return button;
  }

  private renderDone(): void {
    this.root.textContent = '';
    const done = this.root.ownerDocument.createElement('div');
    done.className = 'all-done';
    done.textContent = 'All tasks decided. Nothing left to review.';
    this.root.append(done);
  }

  private renderRetry(message: string): void {
    this.root.textContent = '';
    const doc = this.root.ownerDocument;
    const banner = doc.createElement('div');
    banner.className = 'retry-banner';
    banner.textContent = `Service unreachable: ${message}`;
    const retry = this.button(doc, 'retry', 'Retry', () => void this.loadNextTask());
    banner.append(retry);
    this.root.append(banner);
  }

  private updateElapsed(): void {
    if (!this.view) return;
    const elapsed = this.root.querySelector('.elapsed');
    if (elapsed) elapsed.textContent = `${Math.round(this.view.elapsedMs() / 1000)} s`;
  }

  private setDecisionState(verdict: string): void {
    const state = this.root.querySelector('.decision-state');
    if (state) state.textContent = verdict;
  }

  private clearTimer(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
