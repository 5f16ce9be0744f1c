// Screen geometry for pointy-top hexes on an axial (q, r) grid. Display math
// only; movement and visibility rules all live on the server.

export const SQRT3 = Math.sqrt(3);

export interface Point {
  x: number;
  y: number;
}

/** Cell center in pixels for a given center-to-center spacing. */
export function axialToPixel(q: number, r: number, spacing: number): Point {
  return { x: spacing * (q + r / 2), y: spacing * (SQRT3 / 2) * r };
}

/** Corner points of the hex at a center, sized to tile the grid exactly. */
export function hexCorners(center: Point, spacing: number): Point[] {
  const radius = spacing / SQRT3;
  const corners: Point[] = [];
  for (let i = 0; i < 6; i++) {
    const angle = (Math.PI / 180) * (30 + 60 * i);
    corners.push({ x: center.x + radius * Math.cos(angle), y: center.y + radius * Math.sin(angle) });
  }
  return corners;
}

/** Unit facing vector in screen coordinates (screen y grows downward). */
export function headingVector(heading: number): Point {
  const angle = (Math.PI / 180) * (60 * heading);
  return { x: Math.cos(angle), y: -Math.sin(angle) };
}
