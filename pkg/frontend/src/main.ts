import { Api, ApiError } from './api.js';
import { esc } from './html.js';
import { renderInbox, renderInboxRow } from './views/inbox.js';
import { renderMissingPlan, renderProgressTable } from './views/progress.js';
import { renderGraphSvg } from './views/graph.js';
import { renderMissingObject, renderObjectCard } from './views/object.js';
import type { InboxItem } from './types.js';

const POLL_INTERVAL_MS = (() => {
  const fromQuery = new URLSearchParams(location.search).get('poll');
  const parsed = fromQuery ? Number(fromQuery) * 1000 : NaN;
  return Number.isFinite(parsed) && parsed >= 1000 ? parsed : 10000;
})();

const api = new Api('');
const view = document.getElementById('view')!;
const whoami = document.getElementById('whoami')!;
let pollTimer: number | undefined;

function toast(message: string) {
  const el = document.getElementById('toast')!;
  el.textContent = message;
  el.classList.add('visible');
  window.setTimeout(() => el.classList.remove('visible'), 2500);
}

function saveToken(token: string | null) {
  api.setToken(token);
  if (token === null) localStorage.removeItem('token');
  else localStorage.setItem('token', token);
}

function requireLogin(): void {
  location.hash = '#/login';
}

function handleFailure(err: unknown): void {
  if (err instanceof ApiError && err.status === 401) {
    saveToken(null);
    requireLogin();
    return;
  }
  toast(err instanceof Error ? err.message : String(err));
}

// -- views ------------------------------------------------------------

function showLogin() {
  view.innerHTML =
    `<section class="login"><h2>Sign in</h2>` +
    `<form id="login-form">` +
    `<label>Login <input name="login" autocomplete="username"></label>` +
    `<label>Password <input name="password" type="password" autocomplete="current-password"></label>` +
    `<button type="submit">Sign in</button>` +
    `<p id="login-error" class="error"></p>` +
    `</form></section>`;
  const form = document.getElementById('login-form') as HTMLFormElement;
  form.addEventListener('submit', async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    try {
      const token = await api.login(
        String(data.get('login')),
        String(data.get('password')),
      );
      saveToken(token);
      const me = await api.me();
      whoami.textContent = me.display_name || me.login;
      location.hash = '#/plans';
    } catch (err) {
      document.getElementById('login-error')!.textContent =
        err instanceof ApiError && err.status === 401
          ? 'Wrong login or password.'
          : String(err);
    }
  });
}

async function showPlans() {
  const plans = await api.plans();
  if (plans.length === 0) {
    view.innerHTML = `<section><h2>Plans</h2><p class="empty">No plans exist yet.</p></section>`;
    return;
  }
  view.innerHTML =
    `<section><h2>Plans</h2><ul class="plan-list">` +
    plans
      .map(
        (p) =>
          `<li><a href="#/plan/${p.id}">${esc(p.name)}</a>` +
          `<span class="aim">${esc(p.aim)}</span></li>`,
      )
      .join('') +
    `</ul></section>`;
}

async function showProgress(planId: number) {
  try {
    const doc = await api.progress(planId);
    view.innerHTML = renderProgressTable(doc);
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      view.innerHTML = renderMissingPlan(planId);
      return;
    }
    throw err;
  }
  view.querySelector('.csv-download')?.addEventListener('click', async () => {
    try {
      const text = await api.progressCsv(planId);
      const url = URL.createObjectURL(new Blob([text], { type: 'text/csv' }));
      const a = document.createElement('a');
      a.href = url;
      a.download = `plan-${planId}-progress.csv`;
      a.click();
      URL.revokeObjectURL(url);
    } catch (err) {
      handleFailure(err);
    }
  });
  pollTimer = window.setTimeout(() => {
    if (location.hash === `#/plan/${planId}`) void showProgress(planId);
  }, POLL_INTERVAL_MS);
}

async function showInbox() {
  const items = await api.inbox();
  view.innerHTML = renderInbox(items);
  view.querySelectorAll<HTMLButtonElement>('.confirm, .cancel').forEach(
    (button) => {
      button.addEventListener('click', () => {
        void resolveHandover(
          Number(button.dataset.handover),
          button.classList.contains('confirm'),
        );
      });
    },
  );
}

async function resolveHandover(id: number, confirm: boolean) {
  const row = view.querySelector<HTMLElement>(`li[data-handover="${id}"]`);
  const parent = row?.parentElement ?? null;
  const next = row?.nextElementSibling ?? null;
  row?.remove(); // optimistic; restored below when the server disagrees
  try {
    if (confirm) await api.confirmHandover(id);
    else await api.cancelHandover(id);
    toast(confirm ? 'Handover confirmed.' : 'Handover cancelled.');
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      // raced by the other party; show the terminal state instead
      try {
        const current = await api.handover(id);
        restoreRow(parent, next, current);
        toast(`Already ${current.state}.`);
        return;
      } catch {
        // fall through to the generic path
      }
    }
    if (row && parent) restoreRow(parent, next, null, row);
    handleFailure(err);
  }
}

function restoreRow(
  parent: Element | null,
  before: Element | null,
  item: InboxItem | null,
  original?: HTMLElement,
) {
  if (!parent) return;
  const node = item
    ? fragmentFrom(renderInboxRow(item))
    : original ?? null;
  if (!node) return;
  if (before) parent.insertBefore(node as Node, before);
  else parent.appendChild(node as Node);
}

function fragmentFrom(html: string): Node {
  const template = document.createElement('template');
  template.innerHTML = html;
  return template.content.firstElementChild!;
}

async function showObject(objectId: number) {
  let detail;
  try {
    detail = await api.object(objectId);
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      view.innerHTML = renderMissingObject(objectId);
      return;
    }
    throw err;
  }
  let holder = null;
  try {
    holder = await api.holder(objectId);
  } catch {
    // not everything is handoverable; the card just omits custody
  }
  view.innerHTML = renderObjectCard(detail, holder);
  const depthSelect = view.querySelector<HTMLSelectElement>('#graph-depth')!;
  const drawGraph = async () => {
    const depth = Number(depthSelect.value);
    const [graphDoc, audit] = await Promise.all([
      api.graph(objectId, depth),
      api.audit(objectId).catch(() => null),
    ]);
    const slot = view.querySelector('#graph-slot')!;
    slot.innerHTML = renderGraphSvg(objectId, graphDoc, audit);
    slot.querySelectorAll<SVGGElement>('g.node').forEach((g) => {
      g.addEventListener('click', () => {
        location.hash = `#/object/${g.dataset.node}`;
      });
    });
  };
  depthSelect.addEventListener('change', () => void drawGraph());
  await drawGraph();
}

// -- routing ----------------------------------------------------------

async function route() {
  if (pollTimer !== undefined) {
    clearTimeout(pollTimer);
    pollTimer = undefined;
  }
  const hash = location.hash || '#/plans';
  if (!api.hasToken() && hash !== '#/login') {
    requireLogin();
    return;
  }
  try {
    const planMatch = hash.match(/^#\/plan\/(\d+)$/);
    const objectMatch = hash.match(/^#\/object\/(\d+)$/);
    if (hash === '#/login') showLogin();
    else if (hash === '#/inbox') await showInbox();
    else if (planMatch) await showProgress(Number(planMatch[1]));
    else if (objectMatch) await showObject(Number(objectMatch[1]));
    else await showPlans();
  } catch (err) {
    handleFailure(err);
  }
}

document.getElementById('logout')!.addEventListener('click', () => {
  saveToken(null);
  whoami.textContent = '';
  requireLogin();
});

window.addEventListener('hashchange', () => void route());

const saved = localStorage.getItem('token');
if (saved) api.setToken(saved);
void route();
