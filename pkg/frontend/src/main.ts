/** DOM wiring for the curation page. Served statically; the API origin
 * comes from the `api` query parameter (default: same host, port 8700). */

import { ReviewApi } from "./api.js";
import { OVERLAY_COLORS, layoutBoxes } from "./overlay.js";
import { QueueController } from "./queue.js";
import type { ReviewItem } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const apiBase =
  new URLSearchParams(window.location.search).get("api") ??
  `http://${window.location.hostname || "127.0.0.1"}:8700`;
const api = new ReviewApi(apiBase);

const categorySelect = el<HTMLSelectElement>("category");
const reviewerInput = el<HTMLInputElement>("reviewer");
const remainingLabel = el<HTMLSpanElement>("remaining");
const captionLabel = el<HTMLParagraphElement>("caption");
const metaLabel = el<HTMLParagraphElement>("meta");
const imageWrap = el<HTMLDivElement>("image-wrap");
const image = el<HTMLImageElement>("item-image");
const errorPanel = el<HTMLDivElement>("error-panel");
const retryButton = el<HTMLButtonElement>("retry");
const acceptButton = el<HTMLButtonElement>("accept");
const rejectButton = el<HTMLButtonElement>("reject");
const toast = el<HTMLDivElement>("toast");

let toastTimer: number | undefined;
function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => toast.classList.remove("visible"), 4000);
}

function setControlsEnabled(enabled: boolean): void {
  acceptButton.disabled = !enabled;
  rejectButton.disabled = !enabled;
}

function clearOverlays(): void {
  imageWrap.querySelectorAll(".box-overlay").forEach((n) => n.remove());
}

function drawOverlays(item: ReviewItem): void {
  clearOverlays();
  const rects = layoutBoxes(
    item.boxes,
    item.width || image.naturalWidth,
    item.height || image.naturalHeight,
    image.clientWidth,
    image.clientHeight,
  );
  for (const rect of rects) {
    const div = document.createElement("div");
    div.className = "box-overlay";
    div.style.left = `${rect.left}px`;
    div.style.top = `${rect.top}px`;
    div.style.width = `${rect.width}px`;
    div.style.height = `${rect.height}px`;
    div.style.borderColor = OVERLAY_COLORS[rect.colorIndex] ?? "#ff3b30";
    imageWrap.appendChild(div);
  }
}

const queue = new QueueController(api, {
  onItemChanged: (item) => renderItem(item),
  onCountsChanged: (n) => {
    remainingLabel.textContent = `${n} pending`;
  },
  onError: (message) => showToast(`verdict failed: ${message}`),
});

function renderItem(item: ReviewItem | null): void {
  clearOverlays();
  errorPanel.hidden = true;
  if (!item) {
    captionLabel.textContent = "Queue empty — pick another category.";
    metaLabel.textContent = "";
    image.removeAttribute("src");
    setControlsEnabled(false);
    return;
  }
  captionLabel.textContent = item.caption;
  metaLabel.textContent = `${item.category} · ${item.source} · ${item.pair_id}`;
  setControlsEnabled(false);
  image.onload = () => {
    drawOverlays(item);
    setControlsEnabled(true);
  };
  image.onerror = () => {
    errorPanel.hidden = false;
    setControlsEnabled(false);
  };
  image.src = api.imageUrl(item.pair_id);
}

retryButton.addEventListener("click", () => {
  const item = queue.current;
  if (item) renderItem(item);
});

async function loadCategories(): Promise<void> {
  const categories = await api.categories();
  categorySelect.innerHTML = "";
  for (const cat of categories) {
    const option = document.createElement("option");
    option.value = cat.category;
    option.textContent = `${cat.category} (${cat.pending} pending)`;
    categorySelect.appendChild(option);
  }
  const first = categories[0];
  if (first) await queue.selectCategory(first.category);
}

categorySelect.addEventListener("change", () => {
  void queue.selectCategory(categorySelect.value);
});
reviewerInput.addEventListener("change", () => {
  queue.reviewer = reviewerInput.value || "reviewer";
});
acceptButton.addEventListener("click", () => void queue.submit("accepted"));
rejectButton.addEventListener("click", () => void queue.submit("rejected"));

// keyboard shortcuts share the exact submit path with the buttons
window.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (event.key === "a") void queue.submit("accepted");
  if (event.key === "r") void queue.submit("rejected");
});

window.addEventListener("resize", () => {
  const item = queue.current;
  if (item && image.complete) drawOverlays(item);
});

loadCategories().catch((err) => showToast(`failed to reach service: ${err}`));
