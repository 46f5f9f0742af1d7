import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest';

import { ReviewApi } from '../src/api.js';
import { ReviewApp } from '../src/app.js';
import { TaskView } from '../src/task_view.js';
import { StubService, type StubTaskSpec } from './stub_service.js';

const SIX_SENTENCES = [
  'Reactive node at low power. ',
  'Architecture is preserved.',
  'Pale subcapsular focus. ',
  'Worth a closer look.',
  'Cells are bland lymphocytes. ',
  'No carcinoma identified.',
];

const SPEC: StubTaskSpec = { sentences: SIX_SENTENCES, panelCounts: [2, 2, 2] };

function makeClock(startMs = 1_000_000) {
  let t = startMs;
  return {
    now: () => t,
    advance: (ms: number) => {
      t += ms;
    },
  };
}

describe('review client', () => {
  let root: HTMLElement;
  let clock: ReturnType<typeof makeClock>;
  let started: ReviewApp[];

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById('app')!;
    clock = makeClock();
    started = [];
  });

  afterEach(() => {
    for (const app of started) app.stop(); // drop document listeners and timers
    vi.unstubAllGlobals();
  });

  function boot(specs: StubTaskSpec[] = [SPEC]) {
    const stub = new StubService(specs, clock.now);
    vi.stubGlobal('fetch', stub.fetch);
    const app = new ReviewApp(root, new ReviewApi(''), 'rev-a', { now: clock.now });
    started.push(app);
    return { stub, app };
  }

  it('renders a 6-sentence draft as 6 deletable paragraphs', async () => {
    const { app } = boot();
    await app.start();
    const paragraphs = root.querySelectorAll('.sentence');
    expect(paragraphs).toHaveLength(6);
    for (const paragraph of paragraphs) {
      expect(paragraph.querySelector('button.delete')).not.toBeNull();
    }
    // three titled panels, two sentences each
    const panels = root.querySelectorAll('.panel');
    expect(panels).toHaveLength(3);
    expect([...panels].map((p) => p.querySelectorAll('.sentence').length)).toEqual([2, 2, 2]);
    expect([...panels].map((p) => p.querySelector('h3')?.textContent)).toEqual([
      'Thumbnail Impression',
      'Why Zoom',
      'Findings',
    ]);
  });

  it('deleting one sentence and accepting posts edited with that index', async () => {
    const { stub, app } = boot();
    await app.start();
    const k = 3;
    const target = root.querySelector(`.sentence[data-index="${k}"] button.delete`) as HTMLButtonElement;
    target.click();
    await app.accept();
    expect(stub.decisions).toHaveLength(1);
    expect(stub.decisions[0].verdict).toBe('edited');
    expect(stub.decisions[0].deleted_indices).toEqual([k]);
    expect(stub.decisions[0].edited_sentences).toBeNull();
  });

  it('untouched accept posts accepted with no edit payload', async () => {
    const { stub, app } = boot();
    await app.start();
    await app.accept();
    expect(stub.decisions[0].verdict).toBe('accepted');
    expect(stub.decisions[0].deleted_indices).toEqual([]);
    expect(stub.decisions[0].edited_sentences).toBeNull();
  });

  it('client elapsed time agrees with the server duration within 1 s', async () => {
    const { stub, app } = boot();
    await app.start();
    const view = app.currentView!;
    clock.advance(12_340);
    const clientElapsed = view.elapsedMs();
    await app.accept();
    const serverDuration = stub.decisions[0].decided_at_ms - stub.decisions[0].served_at_ms;
    expect(Math.abs(clientElapsed - serverDuration)).toBeLessThanOrEqual(1000);
  });

  it('in-place sentence edit promotes accept to edited and sends the full list', async () => {
    const { stub, app } = boot();
    await app.start();
    const paragraph = root.querySelector('.sentence[data-index="1"] p') as HTMLElement;
    paragraph.textContent = 'Architecture is effaced.';
    paragraph.dispatchEvent(new Event('input', { bubbles: true }));
    await app.accept();
    expect(stub.decisions[0].verdict).toBe('edited');
    expect(stub.decisions[0].edited_sentences![1]).toBe('Architecture is effaced.');
    expect(stub.decisions[0].edited_sentences).toHaveLength(6);
  });

  it('reject posts rejected without any rationale payload', async () => {
    const { stub, app } = boot();
    await app.start();
    await app.reject();
    expect(stub.decisions[0].verdict).toBe('rejected');
    expect(stub.decisions[0].deleted_indices).toEqual([]);
    expect(stub.decisions[0].edited_sentences).toBeNull();
  });

  it('advances to the next task after a decision and shows done at the end', async () => {
    const { app } = boot([SPEC, { sentences: ['Only one sentence.'], panelCounts: [1, 0, 0] }]);
    await app.start();
    await app.accept();
    expect(root.querySelectorAll('.sentence')).toHaveLength(1);
    expect(root.querySelector('.progress')?.textContent).toBe('2 of 2');
    await app.accept();
    expect(root.querySelector('.all-done')).not.toBeNull();
  });

  it('shows a retry banner when the service is unreachable and does not start the timer', async () => {
    const { stub, app } = boot();
    stub.failNextRequests = 1;
    await app.start();
    expect(root.querySelector('.retry-banner')).not.toBeNull();
    expect(app.currentView).toBeNull();
    (root.querySelector('button.retry') as HTMLButtonElement).click();
    await vi.waitFor(() => {
      expect(root.querySelectorAll('.sentence')).toHaveLength(6);
    });
  });

  it('keyboard shortcuts accept and reject', async () => {
    const { stub, app } = boot([SPEC, SPEC]);
    await app.start();
    document.dispatchEvent(new KeyboardEvent('keydown', { key: 'a', bubbles: true }));
    await vi.waitFor(() => expect(stub.decisions).toHaveLength(1));
    expect(stub.decisions[0].verdict).toBe('accepted');
    await vi.waitFor(() => expect(root.querySelector('.progress')?.textContent).toBe('2 of 2'));
    document.dispatchEvent(new KeyboardEvent('keydown', { key: 'r', bubbles: true }));
    await vi.waitFor(() => expect(stub.decisions).toHaveLength(2));
    expect(stub.decisions[1].verdict).toBe('rejected');
  });

  it('header shows case, roi, and progress', async () => {
    const { app } = boot();
    await app.start();
    expect(root.querySelector('.case')?.textContent).toBe('Case case-9');
    expect(root.querySelector('.roi')?.textContent).toBe('ROI 0');
    expect(root.querySelector('.progress')?.textContent).toBe('1 of 1');
    expect(root.querySelector('.decision-state')?.textContent).toBe('undecided');
  });
});

describe('task view state', () => {
  function view(sentences = SIX_SENTENCES) {
    const clock = makeClock();
    return new TaskView(
      {
        task_id: 't',
        case_id: 'c',
        roi_index: 0,
        progress: '1 of 1',
        thumbnail: '',
        roi_box: {},
        roi_crop: '',
        cyto_crop: null,
        draft: {
          thumbnail_impression: '',
          why_zoom: '',
          findings: '',
          sentences,
          source: 'model_draft',
        },
        panel_sentence_counts: [2, 2, 2],
        served_at_ms: clock.now(),
      },
      clock.now,
    );
  }

  it('is clean until a deletion or edit happens', () => {
    const v = view();
    expect(v.dirty).toBe(false);
    v.deleteSentence(0);
    expect(v.dirty).toBe(true);
    v.restoreSentence(0);
    expect(v.dirty).toBe(false);
    v.editSentence(2, 'changed');
    expect(v.dirty).toBe(true);
  });

  it('rejoin of untouched sentences equals the served draft per panel', () => {
    const v = view();
    expect(v.panelText(0)).toBe(SIX_SENTENCES[0] + SIX_SENTENCES[1]);
    expect(v.panelText(1)).toBe(SIX_SENTENCES[2] + SIX_SENTENCES[3]);
    expect(v.panelText(2)).toBe(SIX_SENTENCES[4] + SIX_SENTENCES[5]);
  });

  it('only whole-sentence deletion or in-place edit can change text', () => {
    const v = view();
    v.deleteSentence(4);
    expect(v.panelText(2)).toBe(SIX_SENTENCES[5]);
    expect(v.decisionBody('accepted')).toEqual({
      task_id: 't',
      verdict: 'edited',
      deleted_indices: [4],
    });
  });
});
