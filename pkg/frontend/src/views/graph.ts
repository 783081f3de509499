import { esc } from '../html.js';
import { layoutGraph } from '../graph/layout.js';
import type { AuditDoc, GraphDoc } from '../types.js';

const WIDTH = 800;
const HEIGHT = 520;

/** Node-link SVG for an object neighbourhood. Clicking a node re-roots. */
export function renderGraphSvg(
  root: number,
  doc: GraphDoc,
  audit: AuditDoc | null,
): string {
  const ids = doc.nodes.map((n) => n.id);
  const positions = layoutGraph(ids, doc.edges, WIDTH, HEIGHT, root);

  const edges = doc.edges
    .map((edge) => {
      const a = positions.get(edge.source_id);
      const b = positions.get(edge.destination_id);
      if (!a || !b) return '';
      const mx = (a.x + b.x) / 2;
      const my = (a.y + b.y) / 2;
      return (
        `<line x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}"` +
        ` x2="${b.x.toFixed(1)}" y2="${b.y.toFixed(1)}" class="edge"/>` +
        `<text x="${mx.toFixed(1)}" y="${(my - 4).toFixed(1)}" class="edge-label">` +
        `${esc(edge.type)}</text>`
      );
    })
    .join('');

  const nodes = doc.nodes
    .map((node) => {
      const p = positions.get(node.id)!;
      const cls = node.id === root ? 'node node-root' : 'node';
      return (
        `<g class="${cls}" data-node="${node.id}" transform="translate(${p.x.toFixed(1)},${p.y.toFixed(1)})">` +
        `<circle r="14"/>` +
        `<text y="-20" class="node-type">${esc(node.type)}</text>` +
        `<text y="30" class="node-name">${esc(shorten(node.name))}</text>` +
        `</g>`
      );
    })
    .join('');

  const badge = auditBadge(audit);
  return (
    `<div class="graph-wrap">${badge}` +
    `<svg viewBox="0 0 ${WIDTH} ${HEIGHT}" class="graph">${edges}${nodes}</svg>` +
    `</div>`
  );
}

function auditBadge(audit: AuditDoc | null): string {
  if (!audit) return '';
  const warnings: string[] = [];
  if (audit.isolated.length > 0) {
    warnings.push(`${audit.isolated.length} isolated object(s)`);
  }
  if (!audit.connected) warnings.push('neighbourhood is not connected');
  if (!audit.satisfies_edge_bound) warnings.push('too few links for its size');
  if (warnings.length === 0) {
    return `<span class="badge badge-ok">audit clean</span>`;
  }
  return `<span class="badge badge-warn">${esc(warnings.join('; '))}</span>`;
}

function shorten(name: string): string {
  return name.length > 28 ? name.slice(0, 27) + '…' : name;
}
