import { esc } from '../html.js';
import type { HolderDoc, ObjectNode } from '../types.js';

export function renderObjectCard(
  detail: ObjectNode & Record<string, unknown>,
  holder: HolderDoc | null,
): string {
  const properties = (detail.properties ?? {}) as Record<
    string,
    { kind: string; value: unknown; epsilon?: number | null }
  >;
  const names = Object.keys(properties);
  const propRows = names
    .map((name) => {
      const p = properties[name];
      const epsilon =
        p.epsilon === null || p.epsilon === undefined
          ? ''
          : ` ± ${esc(p.epsilon)}`;
      return `<tr><th>${esc(name)}</th><td>${esc(p.value)}${epsilon}</td></tr>`;
    })
    .join('');
  const doc = detail.document
    ? `<p class="doc"><a href="/api/objects/${detail.id}/document">` +
      `${esc(detail.document.filename)}</a> (${esc(detail.document.media_type)})</p>`
    : '';
  const custody = holder
    ? `<p class="holder">held by <strong>${esc(holder.login)}</strong></p>`
    : '';
  return (
    `<section class="object-card" data-object="${detail.id}">` +
    `<h2>${esc(detail.name)}</h2>` +
    `<p class="type">${esc(detail.type)} #${detail.id}</p>` +
    custody +
    doc +
    (propRows
      ? `<table class="properties">${propRows}</table>`
      : '<p class="empty">No properties recorded.</p>') +
    `<div id="graph-slot"></div>` +
    `<label>Depth <select id="graph-depth">` +
    [1, 2, 3]
      .map((d) => `<option value="${d}">${d}</option>`)
      .join('') +
    `</select></label>` +
    `</section>`
  );
}

export function renderMissingObject(objectId: number): string {
  return (
    `<section class="object-card"><h2>Object ${objectId} not found</h2>` +
    `<p class="empty">Nothing lives at this id.</p></section>`
  );
}
