/** Shared types mirroring the preview service's HTTP payloads. */

export interface Segment {
  id: number;
  name: string;
  roughness: number;
  metalness: number;
  face_count: number;
}

export type RenderMode = "relight" | "albedo" | "normal" | "segments";

export interface RenderParams {
  azimuth: number;
  elevation: number;
  mode: RenderMode;
  rig: string;
}

export interface MaterialValues {
  roughness: number;
  metalness: number;
}
