/** DOM wiring: connects the reducer, API client, and render scheduler. */

import { ApiError, PreviewClient } from "./api.js";
import { RenderScheduler } from "./render-loop.js";
import {
  displayedSegments,
  effectiveMode,
  initialState,
  isStale,
  reduce,
  type Action,
  type EditorState,
} from "./state.js";
import type { RenderMode, RenderParams, Segment } from "./types.js";

const client = new PreviewClient();
let state: EditorState = initialState;
let objectUrl: string | null = null;

const el = {
  segmentList: document.getElementById("segment-list") as HTMLElement,
  viewport: document.getElementById("viewport") as HTMLImageElement,
  revision: document.getElementById("revision") as HTMLElement,
  stale: document.getElementById("stale") as HTMLElement,
  banner: document.getElementById("banner") as HTMLElement,
  retry: document.getElementById("retry") as HTMLButtonElement,
  modeButtons: Array.from(
    document.querySelectorAll<HTMLButtonElement>("[data-mode]"),
  ),
  rig: document.getElementById("rig") as HTMLSelectElement,
  exportButton: document.getElementById("export") as HTMLButtonElement,
  exportResult: document.getElementById("export-result") as HTMLElement,
};

function renderParams(): RenderParams {
  return {
    azimuth: state.azimuth,
    elevation: state.elevation,
    mode: effectiveMode(state),
    rig: state.rig,
  };
}

const scheduler = new RenderScheduler(async (params) => {
  try {
    const frame = await client.fetchRender(params);
    if (objectUrl !== null) URL.revokeObjectURL(objectUrl);
    objectUrl = URL.createObjectURL(frame.blob);
    el.viewport.src = objectUrl;
    dispatch({ type: "frame-shown", revision: frame.revision });
    dispatch({ type: "connection-changed", lost: false });
  } catch (error) {
    if (!(error instanceof ApiError)) {
      dispatch({ type: "connection-changed", lost: true });
    }
  }
});

function dispatch(action: Action): void {
  const before = state;
  state = reduce(state, action);
  syncDom(before);
}

function syncDom(before: EditorState): void {
  if (
    before.segments !== state.segments ||
    before.pendingEdit !== state.pendingEdit
  ) {
    drawSegments();
  }
  el.revision.textContent =
    state.revision >= 0 ? `revision ${state.revision}` : "revision –";
  el.stale.hidden = !isStale(state);
  el.banner.hidden = !state.connectionLost;
  for (const button of el.modeButtons) {
    button.classList.toggle("active", button.dataset.mode === state.mode);
  }
}

function sliderRow(segment: Segment): HTMLElement {
  const row = document.createElement("li");
  row.className = "segment-row";
  const title = document.createElement("div");
  title.className = "segment-title";
  title.textContent = `${segment.name} (${segment.face_count} faces)`;
  row.appendChild(title);

  for (const key of ["roughness", "metalness"] as const) {
    const label = document.createElement("label");
    label.textContent = key;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = String(segment[key]);
    const value = document.createElement("span");
    value.textContent = segment[key].toFixed(2);

    slider.addEventListener("input", () => {
      value.textContent = Number(slider.value).toFixed(2);
    });
    // commit on release only; scrubbing must not flood the service
    slider.addEventListener("change", () => {
      const edited = {
        roughness: segment.roughness,
        metalness: segment.metalness,
        [key]: Number(slider.value),
      };
      void commitEdit(segment.id, edited.roughness, edited.metalness);
    });
    label.appendChild(slider);
    label.appendChild(value);
    row.appendChild(label);
  }

  row.addEventListener("mouseenter", () => {
    dispatch({ type: "hover-set", segmentId: segment.id });
    scheduler.request(renderParams());
  });
  row.addEventListener("mouseleave", () => {
    dispatch({ type: "hover-set", segmentId: null });
    scheduler.request(renderParams());
  });
  return row;
}

function drawSegments(): void {
  el.segmentList.replaceChildren(
    ...displayedSegments(state).map((segment) => sliderRow(segment)),
  );
}

async function commitEdit(
  segmentId: number,
  roughness: number,
  metalness: number,
): Promise<void> {
  dispatch({ type: "edit-started", segmentId, roughness, metalness });
  try {
    const revision = await client.updateSegment(segmentId, {
      roughness,
      metalness,
    });
    dispatch({ type: "edit-acked", revision });
    scheduler.request(renderParams());
  } catch (error) {
    dispatch({ type: "edit-rejected" });
    if (!(error instanceof ApiError)) {
      dispatch({ type: "connection-changed", lost: true });
    }
  }
}

function wireViewportOrbit(): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  el.viewport.addEventListener("pointerdown", (event) => {
    dragging = true;
    lastX = event.clientX;
    lastY = event.clientY;
    el.viewport.setPointerCapture(event.pointerId);
  });
  el.viewport.addEventListener("pointermove", (event) => {
    if (!dragging) return;
    const azimuth = state.azimuth + (event.clientX - lastX) * 0.5;
    const elevation = state.elevation + (event.clientY - lastY) * 0.5;
    lastX = event.clientX;
    lastY = event.clientY;
    dispatch({ type: "camera-moved", azimuth, elevation });
    scheduler.request(renderParams());
  });
  el.viewport.addEventListener("pointerup", () => {
    dragging = false;
  });
}

function wireControls(): void {
  for (const button of el.modeButtons) {
    button.addEventListener("click", () => {
      dispatch({ type: "mode-set", mode: button.dataset.mode as RenderMode });
      scheduler.request(renderParams());
    });
  }
  el.rig.addEventListener("change", () => {
    dispatch({ type: "rig-set", rig: el.rig.value });
    scheduler.request(renderParams());
  });
  el.exportButton.addEventListener("click", () => {
    void (async () => {
      try {
        const result = await client.exportAsset();
        el.exportResult.textContent = `exported revision ${result.revision}`;
      } catch (error) {
        el.exportResult.textContent =
          error instanceof ApiError
            ? `export failed: ${error.message}`
            : "export failed: connection lost";
      }
    })();
  });
  el.retry.addEventListener("click", () => {
    void bootstrap();
  });
}

async function bootstrap(): Promise<void> {
  try {
    const listing = await client.listSegments();
    dispatch({
      type: "segments-loaded",
      segments: listing.segments,
      revision: listing.revision,
    });
    scheduler.request(renderParams());
  } catch {
    dispatch({ type: "connection-changed", lost: true });
  }
}

wireViewportOrbit();
wireControls();
void bootstrap();
