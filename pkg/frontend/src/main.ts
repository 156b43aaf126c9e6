// DOM wiring for the diagnosis page: drop a screenshot and its hierarchy,
// inspect per-element probabilities, steer the sensitivity slider, and
// switch between mismatches-only and all-probabilities views.

import { AnalysisClient } from "./api";
import { displayScale, hotspotRect, probabilityColor } from "./overlay";
import { ScreenSession } from "./session";
import { Tooltip } from "./tooltip";
import "./style.css";

const SERVICE_URL = import.meta.env.VITE_TAPKIT_URL ?? "http://127.0.0.1:8422";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const dropZone = el<HTMLDivElement>("drop-zone");
const filePicker = el<HTMLInputElement>("file-picker");
const screenshotImg = el<HTMLImageElement>("screenshot");
const overlay = el<HTMLDivElement>("overlay");
const banner = el<HTMLDivElement>("banner");
const hint = el<HTMLDivElement>("hint");
const slider = el<HTMLInputElement>("threshold-slider");
const sliderValue = el<HTMLSpanElement>("threshold-value");
const modeButton = el<HTMLButtonElement>("mode-toggle");
const statusLine = el<HTMLDivElement>("status");

const client = new AnalysisClient(SERVICE_URL);
const tooltip = new Tooltip(document.body);

const session = new ScreenSession(client, {
  onAnalysis: (response) => {
    banner.hidden = true;
    slider.value = String(response.threshold_used);
    sliderValue.textContent = response.threshold_used.toFixed(2);
    statusLine.textContent =
      `${response.elements.length} elements analyzed | model ${response.model_version}`;
    renderOverlay();
  },
  onError: (message) => {
    banner.hidden = false;
    banner.textContent = message;
  },
  onBusy: (busy) => {
    dropZone.classList.toggle("busy", busy);
  },
});

function updateHint(): void {
  if (session.canAnalyze) {
    hint.hidden = true;
  } else {
    hint.hidden = false;
    hint.textContent = session.image
      ? "now drop the matching view-hierarchy JSON"
      : "drop a screenshot PNG and its view-hierarchy JSON";
  }
}

function acceptFiles(files: FileList | File[]): void {
  let image: File | null = null;
  let hierarchy: File | null = null;
  for (const file of Array.from(files)) {
    if (file.type.startsWith("image/") || /\.png$/i.test(file.name)) {
      image = file;
    } else if (file.type === "application/json" || /\.json$/i.test(file.name)) {
      hierarchy = file;
    }
  }
  session.setFiles(image, hierarchy);
  if (image) {
    screenshotImg.src = URL.createObjectURL(image);
  }
  updateHint();
  if (session.canAnalyze) {
    void session.analyze();
  }
}

function renderOverlay(): void {
  overlay.replaceChildren();
  tooltip.dismiss();
  const analysis = session.analysis;
  if (!analysis || !screenshotImg.naturalWidth) return;
  const scale = displayScale(
    screenshotImg.naturalWidth,
    screenshotImg.naturalHeight,
    screenshotImg.clientWidth,
    screenshotImg.clientHeight,
  );
  for (const element of session.visible()) {
    const rect = hotspotRect(element.bounds, scale);
    const spot = document.createElement("div");
    spot.className = "hotspot" + (element.mismatch ? " mismatch" : "");
    spot.style.left = `${rect.left}px`;
    spot.style.top = `${rect.top}px`;
    spot.style.width = `${rect.width}px`;
    spot.style.height = `${rect.height}px`;
    if (session.viewMode === "all") {
      spot.style.borderColor = probabilityColor(element.probability);
      spot.style.background = probabilityColor(element.probability) + "33";
    }
    spot.addEventListener("click", (event) => {
      event.stopPropagation();
      tooltip.show(element, event.clientX, event.clientY);
    });
    overlay.appendChild(spot);
  }
}

dropZone.addEventListener("dragover", (event) => {
  event.preventDefault();
  dropZone.classList.add("dragging");
});
dropZone.addEventListener("dragleave", () => dropZone.classList.remove("dragging"));
dropZone.addEventListener("drop", (event) => {
  event.preventDefault();
  dropZone.classList.remove("dragging");
  if (event.dataTransfer) acceptFiles(event.dataTransfer.files);
});
dropZone.addEventListener("click", () => filePicker.click());
filePicker.addEventListener("change", () => {
  if (filePicker.files) acceptFiles(filePicker.files);
});

slider.addEventListener("input", () => {
  const value = Number(slider.value);
  sliderValue.textContent = value.toFixed(2);
  session.setThreshold(value);
});

modeButton.addEventListener("click", () => {
  const mode = session.toggleViewMode();
  modeButton.textContent = mode === "all" ? "show mismatches only" : "show all probabilities";
  renderOverlay();
});

screenshotImg.addEventListener("load", renderOverlay);
window.addEventListener("resize", renderOverlay);

client
  .health()
  .then((health) => {
    statusLine.textContent = `service ready | model ${health.model_version} | default threshold ${health.threshold.toFixed(2)}`;
    slider.value = String(health.threshold);
    sliderValue.textContent = health.threshold.toFixed(2);
  })
  .catch(() => {
    banner.hidden = false;
    banner.textContent = `analysis service unreachable at ${SERVICE_URL}`;
  });

updateHint();
