import { esc } from '../html.js';
import type { InboxItem } from '../types.js';

// Pending transfers addressed to the signed-in user. Confirm and Cancel
// post back; the row is removed optimistically and restored on failure.

export function renderInbox(items: InboxItem[]): string {
  if (items.length === 0) {
    return `<section class="inbox"><h2>Inbox</h2><p class="empty">Nothing is waiting for you.</p></section>`;
  }
  const rows = items.map(renderInboxRow).join('');
  return (
    `<section class="inbox"><h2>Inbox</h2>` +
    `<ul class="inbox-list">${rows}</ul></section>`
  );
}

export function renderInboxRow(item: InboxItem): string {
  const note = item.note
    ? `<p class="note">${esc(item.note)}</p>`
    : '';
  const actions =
    item.state === 'pending'
      ? `<button class="confirm" data-handover="${item.id}">Confirm</button>` +
        `<button class="cancel" data-handover="${item.id}">Cancel</button>`
      : `<span class="state state-${esc(item.state)}">${esc(item.state)}</span>`;
  return (
    `<li class="inbox-item" data-handover="${item.id}">` +
    `<div class="what"><a href="#/object/${item.object_id}">object ${item.object_id}</a>` +
    ` from <strong>${esc(item.sender.display_name || item.sender.login)}</strong>` +
    ` <time>${esc(item.initiated_at)}</time></div>` +
    note +
    `<div class="actions">${actions}</div>` +
    `</li>`
  );
}
