// Client-side fixture activation mirror, for drawing attraction zones.

export interface FixtureView {
  objectId: string;
  center: number[];
  rOn: number;
  rOff: number;
  active: boolean;
}

function dist(a: number[], b: number[]): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

export function evaluateFixtures(
  pegPosition: number[],
  objects: { objectId: string; position: number[] }[],
  prior: FixtureView[],
  rOn = 0.10,
  rOff = 0.15,
): FixtureView[] {
  const priorActive = new Map(prior.map((f) => [f.objectId, f.active]));
  return objects.map((obj) => {
    const d = dist(pegPosition, obj.position);
    const was = priorActive.get(obj.objectId) ?? false;
    const active = d < rOn ? true : d > rOff ? false : was;
    return { objectId: obj.objectId, center: obj.position, rOn, rOff, active };
  });
}
