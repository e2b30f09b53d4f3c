/**
 * Workbench view state: the lineage breadcrumb with one viewport per
 * level, the pending diagonal selection, the impurity slider, and the
 * strip toggles. Pure data plus transition functions; rendering and
 * server traffic live elsewhere.
 */

import { Span, Window2D, fullWindow } from "./coords.js";

/** Slider bounds: 0.5 is the balanced ceiling where every root is a leaf. */
export const I_MIN_MIN = 0;
export const I_MIN_MAX = 0.5;
export const I_MIN_STEP = 0.01;

/** Strip panel toggles: scenery row on/off, velocity scale shared/solo. */
export interface StripToggles {
  types: boolean;
  shared: boolean;
}

/** One lineage level: a session plus the view the user left it in. */
export interface CrumbNode {
  sessionId: string;
  /** Selection in the parent's ordered indices; null at the root. */
  range: [number, number] | null;
  m: number;
  viewport: Window2D;
  /** True while a child creation launched from this level is in flight. */
  pendingChild: boolean;
}

export interface ViewState {
  crumbs: CrumbNode[];
  /** Index of the level currently on screen, -1 before a root exists. */
  active: number;
  /**
   * Pending selection as a diagonal span [lo, hi): always a square block
   * symmetric about the diagonal, because a selection picks datapoints,
   * not an arbitrary submatrix.
   */
  selection: Span | null;
  iMin: number;
  strips: StripToggles;
}

export function newViewState(): ViewState {
  return {
    crumbs: [],
    active: -1,
    selection: null,
    iMin: 0.29,
    strips: { types: true, shared: true },
  };
}

export function activeCrumb(state: ViewState): CrumbNode | null {
  return state.active >= 0 ? (state.crumbs[state.active] ?? null) : null;
}

/** Clamp a slider value onto the 0.01 grid inside [0, 0.5]. */
export function stepIMin(value: number): number {
  const clamped = Math.min(I_MIN_MAX, Math.max(I_MIN_MIN, value));
  // Round in integer hundredths; n * 0.01 would drift off the grid.
  return Math.round(clamped * 100) / 100;
}

/**
 * Snap a drag along the diagonal to a block [lo, hi) of whole rows.
 * Returns null when fewer than two rows are covered; a singleton or
 * empty block cannot be re-clustered, so such drags select nothing.
 */
export function snapSelection(
  a: number,
  b: number,
  m: number,
): Span | null {
  const lo = Math.max(0, Math.floor(Math.min(a, b)));
  const hi = Math.min(m, Math.ceil(Math.max(a, b)));
  if (hi - lo < 2) return null;
  return { lo, hi };
}

export function setSelection(state: ViewState, selection: Span | null): void {
  state.selection = selection;
}

export function setViewport(state: ViewState, viewport: Window2D): void {
  const crumb = activeCrumb(state);
  if (crumb) crumb.viewport = viewport;
}

/** Reset the breadcrumb to a fresh root session. */
export function openRoot(state: ViewState, sessionId: string, m: number): void {
  state.crumbs = [
    {
      sessionId,
      range: null,
      m,
      viewport: fullWindow(m),
      pendingChild: false,
    },
  ];
  state.active = 0;
  state.selection = null;
}

/**
 * Claim the active level's single child-creation slot. Returns false if
 * a creation is already pending there; the caller must not start another.
 */
export function beginChildCreation(state: ViewState): boolean {
  const crumb = activeCrumb(state);
  if (!crumb || crumb.pendingChild) return false;
  crumb.pendingChild = true;
  return true;
}

export function endChildCreation(state: ViewState, level: number): void {
  const crumb = state.crumbs[level];
  if (crumb) crumb.pendingChild = false;
}

/**
 * Append a finished child below the active level and move into it.
 * Re-selecting a block that already produced the child at this position
 * (the server is idempotent) just navigates; deeper stale levels are cut.
 */
export function pushChild(
  state: ViewState,
  sessionId: string,
  range: [number, number],
  m: number,
): void {
  const next = state.active + 1;
  const existing = state.crumbs[next];
  if (existing && existing.sessionId === sessionId) {
    state.active = next;
    state.selection = null;
    return;
  }
  state.crumbs = state.crumbs.slice(0, next);
  state.crumbs.push({
    sessionId,
    range,
    m,
    viewport: fullWindow(m),
    pendingChild: false,
  });
  state.active = next;
  state.selection = null;
}

/** Switch levels; each level keeps the viewport it was left with. */
export function navigate(state: ViewState, level: number): void {
  if (level < 0 || level >= state.crumbs.length) return;
  state.active = level;
  state.selection = null;
}
