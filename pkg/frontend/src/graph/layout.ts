export interface Point {
  x: number;
  y: number;
}

export interface LayoutEdge {
  source_id: number;
  destination_id: number;
}

// Small deterministic force layout: seeded positions, spring forces along
// edges, pairwise repulsion, then everything is scaled into the viewbox.
// Deterministic so a re-render of the same neighbourhood looks the same.

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const ITERATIONS = 200;
const SPRING_LENGTH = 100;
const SPRING_K = 0.02;
const REPULSION = 4000;

export function layoutGraph(
  nodeIds: number[],
  edges: LayoutEdge[],
  width = 800,
  height = 520,
  seed = 1,
): Map<number, Point> {
  const positions = new Map<number, Point>();
  if (nodeIds.length === 0) return positions;

  const rand = mulberry32(seed * 2654435761 + nodeIds.length);
  for (const id of nodeIds) {
    positions.set(id, {
      x: rand() * width,
      y: rand() * height,
    });
  }
  if (nodeIds.length === 1) {
    positions.set(nodeIds[0], { x: width / 2, y: height / 2 });
    return positions;
  }

  const known = new Set(nodeIds);
  const links = edges.filter(
    (e) => known.has(e.source_id) && known.has(e.destination_id),
  );

  for (let step = 0; step < ITERATIONS; step++) {
    const cooling = 1 - step / ITERATIONS;
    const force = new Map<number, Point>();
    for (const id of nodeIds) force.set(id, { x: 0, y: 0 });

    for (let i = 0; i < nodeIds.length; i++) {
      for (let j = i + 1; j < nodeIds.length; j++) {
        const a = positions.get(nodeIds[i])!;
        const b = positions.get(nodeIds[j])!;
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let d2 = dx * dx + dy * dy;
        if (d2 < 1) {
          dx = (i - j) * 0.1 || 0.1;
          dy = 0.1;
          d2 = dx * dx + dy * dy;
        }
        const push = REPULSION / d2;
        const fa = force.get(nodeIds[i])!;
        const fb = force.get(nodeIds[j])!;
        fa.x += dx * push;
        fa.y += dy * push;
        fb.x -= dx * push;
        fb.y -= dy * push;
      }
    }

    for (const edge of links) {
      const a = positions.get(edge.source_id)!;
      const b = positions.get(edge.destination_id)!;
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const distance = Math.sqrt(dx * dx + dy * dy) || 1;
      const pull = SPRING_K * (distance - SPRING_LENGTH);
      const fa = force.get(edge.source_id)!;
      const fb = force.get(edge.destination_id)!;
      fa.x += (dx / distance) * pull * distance * 0.05;
      fa.y += (dy / distance) * pull * distance * 0.05;
      fb.x -= (dx / distance) * pull * distance * 0.05;
      fb.y -= (dy / distance) * pull * distance * 0.05;
    }

    for (const id of nodeIds) {
      const p = positions.get(id)!;
      const f = force.get(id)!;
      p.x += Math.max(-30, Math.min(30, f.x)) * cooling;
      p.y += Math.max(-30, Math.min(30, f.y)) * cooling;
    }
  }

  // scale into the viewbox with a margin
  const xs = nodeIds.map((id) => positions.get(id)!.x);
  const ys = nodeIds.map((id) => positions.get(id)!.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const margin = 60;
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  for (const id of nodeIds) {
    const p = positions.get(id)!;
    p.x = margin + ((p.x - minX) / spanX) * (width - 2 * margin);
    p.y = margin + ((p.y - minY) / spanY) * (height - 2 * margin);
  }
  return positions;
}
