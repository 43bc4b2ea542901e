/** Editor state as a pure reducer.
 *
 * The whole UI derives from (last acknowledged server state, the one
 * in-flight optimistic edit); nothing else survives a refresh, so a reload
 * always reconverges on what the server holds.
 */

import { clamp01 } from "./api.js";
import type { RenderMode, Segment } from "./types.js";

export interface PendingEdit {
  segmentId: number;
  roughness: number;
  metalness: number;
}

export interface EditorState {
  segments: Segment[];
  revision: number;
  pendingEdit: PendingEdit | null;
  hoveredSegment: number | null;
  mode: RenderMode;
  azimuth: number;
  elevation: number;
  rig: string;
  shownRevision: number | null;
  connectionLost: boolean;
}

export const initialState: EditorState = {
  segments: [],
  revision: -1,
  pendingEdit: null,
  hoveredSegment: null,
  mode: "relight",
  azimuth: 30,
  elevation: 20,
  rig: "default",
  shownRevision: null,
  connectionLost: false,
};

export type Action =
  | { type: "segments-loaded"; segments: Segment[]; revision: number }
  | { type: "edit-started"; segmentId: number; roughness: number; metalness: number }
  | { type: "edit-acked"; revision: number }
  | { type: "edit-rejected" }
  | { type: "frame-shown"; revision: number }
  | { type: "camera-moved"; azimuth: number; elevation: number }
  | { type: "mode-set"; mode: RenderMode }
  | { type: "rig-set"; rig: string }
  | { type: "hover-set"; segmentId: number | null }
  | { type: "connection-changed"; lost: boolean };

export function reduce(state: EditorState, action: Action): EditorState {
  switch (action.type) {
    case "segments-loaded":
      return {
        ...state,
        segments: action.segments,
        revision: action.revision,
        pendingEdit: null,
        connectionLost: false,
      };
    case "edit-started":
      return {
        ...state,
        pendingEdit: {
          segmentId: action.segmentId,
          roughness: clamp01(action.roughness),
          metalness: clamp01(action.metalness),
        },
      };
    case "edit-acked": {
      if (state.pendingEdit === null) return state;
      const edit = state.pendingEdit;
      return {
        ...state,
        segments: state.segments.map((s) =>
          s.id === edit.segmentId
            ? { ...s, roughness: edit.roughness, metalness: edit.metalness }
            : s,
        ),
        revision: Math.max(state.revision, action.revision),
        pendingEdit: null,
      };
    }
    case "edit-rejected":
      // rollback: dropping the optimistic edit snaps sliders back to the
      // last acknowledged values
      return { ...state, pendingEdit: null };
    case "frame-shown":
      return { ...state, shownRevision: action.revision };
    case "camera-moved":
      return {
        ...state,
        azimuth: action.azimuth,
        elevation: Math.min(90, Math.max(-90, action.elevation)),
      };
    case "mode-set":
      return { ...state, mode: action.mode };
    case "rig-set":
      return { ...state, rig: action.rig };
    case "hover-set":
      return { ...state, hoveredSegment: action.segmentId };
    case "connection-changed":
      return { ...state, connectionLost: action.lost };
  }
}

/** Acknowledged segments with the optimistic edit overlaid for display. */
export function displayedSegments(state: EditorState): Segment[] {
  if (state.pendingEdit === null) return state.segments;
  const edit = state.pendingEdit;
  return state.segments.map((s) =>
    s.id === edit.segmentId
      ? { ...s, roughness: edit.roughness, metalness: edit.metalness }
      : s,
  );
}

/** Hovering a segment row previews the segmentation; otherwise user's mode. */
export function effectiveMode(state: EditorState): RenderMode {
  return state.hoveredSegment === null ? state.mode : "segments";
}

/** The displayed frame lags behind the latest acknowledged revision. */
export function isStale(state: EditorState): boolean {
  return state.shownRevision !== null && state.shownRevision < state.revision;
}
