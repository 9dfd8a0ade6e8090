/**
 * Gamepad mapping: sticks displace the selected control-point handle.
 * Left stick moves the point in the ground plane, right stick's vertical
 * axis moves it in z; a dead zone suppresses drift. Pure math so the
 * mapping is testable; polling happens in main.ts.
 */

export interface StickState {
  leftX: number;
  leftY: number;
  rightY: number;
}

export interface GamepadMapping {
  deadZone: number;
  metersPerSecond: number;
}

export const DEFAULT_MAPPING: GamepadMapping = { deadZone: 0.15, metersPerSecond: 0.4 };

function shaped(v: number, deadZone: number): number {
  const a = Math.abs(v);
  if (a < deadZone) return 0;
  const scaled = (a - deadZone) / (1 - deadZone);
  return Math.sign(v) * scaled * scaled; // quadratic response for fine control
}

/** Displacement (meters) for the selected handle over `dtSeconds`. */
export function stickDisplacement(
  sticks: StickState,
  dtSeconds: number,
  mapping: GamepadMapping = DEFAULT_MAPPING,
): [number, number, number] {
  const k = mapping.metersPerSecond * dtSeconds;
  return [
    shaped(sticks.leftX, mapping.deadZone) * k + 0,
    // Stick "up" is negative in the Gamepad API; up should move +y (left).
    -shaped(sticks.leftY, mapping.deadZone) * k + 0,
    -shaped(sticks.rightY, mapping.deadZone) * k + 0,
  ];
}

export function readSticks(pad: { axes: ReadonlyArray<number> }): StickState {
  return {
    leftX: pad.axes[0] ?? 0,
    leftY: pad.axes[1] ?? 0,
    rightY: pad.axes[3] ?? 0,
  };
}
