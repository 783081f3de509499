import { esc } from '../html.js';
import type { ProgressDoc } from '../types.js';

/**
 * Plan progress as a table. One column per required type; a count cell
 * gets the red `count-zero` class exactly when the server marked it
 * incomplete. The numbers are shown as delivered, nothing is recomputed
 * here.
 */
export function renderProgressTable(doc: ProgressDoc): string {
  if (doc.rows.length === 0) {
    return (
      `<section class="progress">` +
      `<h2>${esc(doc.plan)}</h2>` +
      `<p class="empty">No samples are attached to this plan yet.</p>` +
      `</section>`
    );
  }

  const scalarNames = doc.scalar_columns;
  const head =
    '<tr><th>Sample</th><th>Name</th>' +
    scalarNames.map((n) => `<th>${esc(n)}</th>`).join('') +
    doc.required_types.map((n) => `<th>${esc(n)}</th>`).join('') +
    '</tr>';

  const body = doc.rows
    .map((row) => {
      const scalars = scalarNames
        .map((name) => {
          const value = row.scalars[name];
          return `<td>${value === null || value === undefined ? '' : esc(value)}</td>`;
        })
        .join('');
      const counts = row.counts
        .map((c) => {
          const cls = c.incomplete ? 'count count-zero' : 'count';
          return `<td class="${cls}">${c.count}</td>`;
        })
        .join('');
      return (
        `<tr data-sample="${row.sample_id}">` +
        `<td><a href="#/object/${row.sample_id}">${row.sample_id}</a></td>` +
        `<td class="name">${esc(row.object_name)}</td>` +
        scalars +
        counts +
        '</tr>'
      );
    })
    .join('');

  return (
    `<section class="progress">` +
    `<h2>${esc(doc.plan)}</h2>` +
    `<p class="aim">${esc(doc.aim)}</p>` +
    `<p><button class="csv-download" data-plan="${doc.plan_id}">Download CSV</button></p>` +
    `<table class="progress-table"><thead>${head}</thead><tbody>${body}</tbody></table>` +
    `</section>`
  );
}

export function renderMissingPlan(planId: number): string {
  return (
    `<section class="progress">` +
    `<h2>Plan ${planId} not found</h2>` +
    `<p class="empty">It may have been deleted, or the id is wrong. ` +
    `<a href="#/plans">Back to the plan list.</a></p>` +
    `</section>`
  );
}
