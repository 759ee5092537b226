// Forward kinematics for the wireframe overlay: the same standard-DH chain
// the robot server simulates, reduced to what drawing needs (joint origins).

export interface DhParams {
  a: number[];      // link lengths, m
  d: number[];      // link offsets, m
  alphaDeg: number[]; // twist angles, degrees
}

export const DEFAULT_DH: DhParams = {
  a: [0.0, 0.3, 0.075, 0.0, 0.0, 0.0],
  d: [0.33, 0.0, 0.0, 0.32, 0.0, 0.08],
  alphaDeg: [-90, 0, -90, 90, -90, 0],
};

type Mat4 = number[]; // row-major 16

function matMul(m: Mat4, n: Mat4): Mat4 {
  const out = new Array<number>(16).fill(0);
  for (let r = 0; r < 4; r++) {
    for (let c = 0; c < 4; c++) {
      let acc = 0;
      for (let k = 0; k < 4; k++) acc += m[r * 4 + k] * n[k * 4 + c];
      out[r * 4 + c] = acc;
    }
  }
  return out;
}

function dhRow(theta: number, d: number, a: number, alpha: number): Mat4 {
  const ct = Math.cos(theta), st = Math.sin(theta);
  const ca = Math.cos(alpha), sa = Math.sin(alpha);
  return [
    ct, -st * ca, st * sa, a * ct,
    st, ct * ca, -ct * sa, a * st,
    0, sa, ca, d,
    0, 0, 0, 1,
  ];
}

/** Joint frame origins, base first, tool last: 7 points of 3. */
export function jointOrigins(q: number[], dh: DhParams = DEFAULT_DH
                             ): number[][] {
  const rad = Math.PI / 180;
  let T: Mat4 = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];
  const points: number[][] = [[0, 0, 0]];
  for (let i = 0; i < 6; i++) {
    T = matMul(T, dhRow(q[i], dh.d[i], dh.a[i], dh.alphaDeg[i] * rad));
    points.push([T[3], T[7], T[11]]);
  }
  return points;
}

export function toolPosition(q: number[], dh: DhParams = DEFAULT_DH
                             ): number[] {
  const points = jointOrigins(q, dh);
  return points[points.length - 1];
}
