// Session UI: keyword onboarding, recommendation cards with explore badges,
// watch history, the exploration toggle and the live diversity readout.
//
// The app is a pure client of the /v1/ API: modes, badges and the ILS number
// are rendered exactly as the server reports them. At most one
// recommendation request is in flight; responses superseded by a newer
// request (e.g. a quickly flipped toggle) are discarded by sequence number.

import {
  ApiClient,
  ApiError,
  ItemId,
  RecommendationResponse,
} from './api';

interface HistoryRow {
  itemId: ItemId;
  title: string;
  clusterId: number;
}

function esc(text: string): string {
  const div = document.createElement('div');
  div.textContent = text;
  return div.innerHTML;
}

function modeLabel(mode: 'cold_start' | 'personalized'): string {
  return mode === 'personalized' ? 'Personalized' : 'Cold start';
}

export class App {
  private userId: string | null = null;
  private mode: 'cold_start' | 'personalized' = 'cold_start';
  private exploreOn = false;
  private k = 10;
  private requestSeq = 0;
  private history: HistoryRow[] = [];
  private titles = new Map<ItemId, string>();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  start(): void {
    this.renderOnboarding();
  }

  // -- onboarding -----------------------------------------------------------

  private renderOnboarding(error = ''): void {
    this.root.innerHTML = `
      <section id="onboarding">
        <h1>Pick a few interests</h1>
        <p>Keywords seed your first recommendations; watching items takes
           over from there.</p>
        <form id="onboard-form">
          <input id="keywords-input" type="text"
                 placeholder="e.g. heist noir space" autocomplete="off">
          <button id="onboard-submit" type="submit">Start</button>
        </form>
        <p id="onboard-error" class="error" ${error ? '' : 'hidden'}>
          ${esc(error)}</p>
      </section>`;
    const form = this.root.querySelector<HTMLFormElement>('#onboard-form')!;
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      const input = this.root.querySelector<HTMLInputElement>('#keywords-input')!;
      void this.onboard(input.value);
    });
  }

  private showOnboardError(message: string): void {
    const box = this.root.querySelector<HTMLElement>('#onboard-error');
    if (box) {
      box.textContent = message;
      box.hidden = false;
    }
  }

  async onboard(raw: string): Promise<void> {
    const keywords = raw.split(/[\s,]+/).map((s) => s.trim()).filter(Boolean);
    if (keywords.length === 0) {
      this.showOnboardError('Enter at least one keyword.');
      return;
    }
    try {
      const created = await this.api.createUser(keywords);
      this.userId = created.user_id;
    } catch (err) {
      this.showOnboardError(
        err instanceof ApiError
          ? err.message
          : 'Server unreachable. Check the API URL and try again.');
      return;
    }
    this.history = [];
    this.renderSession();
    await this.refresh();
  }

  // -- session shell ---------------------------------------------------------

  private renderSession(): void {
    this.root.innerHTML = `
      <section id="session">
        <header>
          <span id="user-label">${esc(this.userId ?? '')}</span>
          <span id="mode-banner" class="banner">${modeLabel(this.mode)}</span>
        </header>
        <div id="controls">
          <label id="explore-label">
            <input id="explore-toggle" type="checkbox">
            Explore new territory
          </label>
          <label id="k-label">
            List size
            <select id="k-select">
              <option value="5">5</option>
              <option value="10" selected>10</option>
            </select>
          </label>
          <button id="refresh-btn" type="button">New recommendations</button>
          <span id="ils-readout" title="Average pairwise similarity of the
list; lower means more varied">ILS: –</span>
        </div>
        <p id="error-banner" class="error" hidden>
          <span id="error-text"></span>
          <button id="retry-btn" type="button">Retry</button>
        </p>
        <div id="cards"></div>
        <aside id="history">
          <h2>Watched (<span id="history-count">0</span>)</h2>
          <ol id="history-panel"></ol>
        </aside>
      </section>`;

    this.root.querySelector<HTMLInputElement>('#explore-toggle')!
      .addEventListener('change', (event) => {
        this.exploreOn = (event.target as HTMLInputElement).checked;
        void this.refresh();
      });
    this.root.querySelector<HTMLSelectElement>('#k-select')!
      .addEventListener('change', (event) => {
        this.k = Number((event.target as HTMLSelectElement).value);
        void this.refresh();
      });
    this.root.querySelector<HTMLButtonElement>('#refresh-btn')!
      .addEventListener('click', () => void this.refresh());
    this.root.querySelector<HTMLButtonElement>('#retry-btn')!
      .addEventListener('click', () => void this.refresh());
  }

  private setBanner(mode: 'cold_start' | 'personalized'): void {
    this.mode = mode;
    const banner = this.root.querySelector<HTMLElement>('#mode-banner');
    if (banner) {
      banner.textContent = modeLabel(mode);
      banner.dataset.mode = mode;
    }
  }

  private showError(message: string): void {
    const box = this.root.querySelector<HTMLElement>('#error-banner');
    const text = this.root.querySelector<HTMLElement>('#error-text');
    if (box && text) {
      text.textContent = message;
      box.hidden = false;
    }
  }

  private hideError(): void {
    const box = this.root.querySelector<HTMLElement>('#error-banner');
    if (box) {
      box.hidden = true;
    }
  }

  private setBusy(busy: boolean): void {
    for (const id of ['#refresh-btn', '#explore-toggle', '#k-select']) {
      const el = this.root.querySelector<HTMLInputElement>(id);
      if (el) {
        el.disabled = busy;
      }
    }
  }

  // -- recommendations -------------------------------------------------------

  async refresh(): Promise<void> {
    if (!this.userId) {
      return;
    }
    const seq = ++this.requestSeq;
    this.setBusy(true);
    let resp: RecommendationResponse;
    try {
      resp = await this.api.getRecommendations(this.userId, this.k,
                                               this.exploreOn);
    } catch (err) {
      if (seq === this.requestSeq) {
        this.setBusy(false);
        this.showError(err instanceof ApiError
          ? err.message
          : 'Could not reach the server.');
      }
      return;
    }
    if (seq !== this.requestSeq) {
      return; // superseded by a newer toggle/refresh
    }
    this.setBusy(false);
    this.hideError();
    this.setBanner(resp.mode);
    this.renderCards(resp);
  }

  private renderCards(resp: RecommendationResponse): void {
    const ils = this.root.querySelector<HTMLElement>('#ils-readout');
    if (ils) {
      ils.textContent = resp.ils === null ? 'ILS: –'
        : `ILS: ${resp.ils.toFixed(3)}`;
    }
    const grid = this.root.querySelector<HTMLElement>('#cards')!;
    grid.innerHTML = '';
    for (const item of resp.items) {
      this.titles.set(item.id, item.title);
      const card = document.createElement('article');
      card.className = 'card' + (item.explore ? ' explore' : '');
      card.dataset.itemId = String(item.id);
      card.innerHTML = `
        <h3>${esc(item.title)}</h3>
        ${item.explore ? '<span class="badge-explore">explore</span>' : ''}
        <p class="genres">${esc(item.genres.join(', '))}</p>
        <button class="watch-btn" type="button">Watched it</button>`;
      card.querySelector<HTMLButtonElement>('.watch-btn')!
        .addEventListener('click', () => void this.watch(item.id, card));
      grid.appendChild(card);
    }
  }

  // -- interactions ----------------------------------------------------------

  async watch(itemId: ItemId, card: HTMLElement): Promise<void> {
    if (!this.userId) {
      return;
    }
    const button = card.querySelector<HTMLButtonElement>('.watch-btn');
    if (button) {
      button.disabled = true;
    }
    try {
      const out = await this.api.postInteraction(this.userId, itemId);
      card.classList.add('watched');
      this.history.push({
        itemId,
        title: this.titles.get(itemId) ?? String(itemId),
        clusterId: out.cluster_id,
      });
      this.renderHistory();
      this.setBanner(out.mode);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        card.classList.add('stale'); // item vanished server-side
        void this.refresh();
      } else {
        if (button) {
          button.disabled = false;
        }
        this.showError(err instanceof ApiError
          ? err.message
          : 'Could not record the interaction.');
      }
    }
  }

  private renderHistory(): void {
    const count = this.root.querySelector<HTMLElement>('#history-count');
    if (count) {
      count.textContent = String(this.history.length);
    }
    const panel = this.root.querySelector<HTMLElement>('#history-panel')!;
    panel.innerHTML = '';
    for (const row of this.history) {
      const li = document.createElement('li');
      li.dataset.itemId = String(row.itemId);
      li.innerHTML = `${esc(row.title)}
        <span class="cluster-tag">cluster ${row.clusterId}</span>`;
      panel.appendChild(li);
    }
  }
}
