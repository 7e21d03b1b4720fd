import { ApiClient } from "./api.js";
import { Editor } from "./editor.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const api = new ApiClient();
const canvas = el<HTMLCanvasElement>("editor-canvas");
const gallery = el<HTMLUListElement>("gallery");
const countLabel = el<HTMLSpanElement>("count-label");
const dirtyLabel = el<HTMLSpanElement>("dirty-label");
const statusLabel = el<HTMLSpanElement>("status-label");
const saveButton = el<HTMLButtonElement>("save-button");
const zoomLabel = el<HTMLSpanElement>("zoom-label");

function syncToolbar(editor: Editor): void {
  countLabel.textContent = String(editor.state.count);
  dirtyLabel.textContent = editor.state.dirty ? "unsaved changes" : "";
  statusLabel.textContent = editor.status;
  zoomLabel.textContent = `${editor.state.view.zoom.toFixed(2)}x`;
  saveButton.disabled = !editor.state.dirty;
}

const editor = new Editor(canvas, api, () => syncToolbar(editor));
saveButton.addEventListener("click", () => void editor.save());

async function refreshGallery(): Promise<void> {
  gallery.replaceChildren();
  let entries;
  try {
    entries = await api.listImages();
  } catch (err) {
    const banner = document.createElement("li");
    banner.className = "error";
    banner.textContent = `service unreachable: ${String(err)} (retry below)`;
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.addEventListener("click", () => void refreshGallery());
    banner.appendChild(retry);
    gallery.appendChild(banner);
    return;
  }
  if (entries.length === 0) {
    const empty = document.createElement("li");
    empty.textContent =
      "no images in this dataset; generate one with `camocount synth`";
    gallery.appendChild(empty);
    return;
  }
  for (const entry of entries) {
    const item = document.createElement("li");
    const badge = document.createElement("span");
    badge.className = "badge";
    badge.textContent = String(entry.annotated_count);
    item.textContent = entry.filename;
    item.appendChild(badge);
    item.addEventListener("click", () => {
      if (editor.state.dirty && !confirm("Discard unsaved changes?")) return;
      void editor.open(entry.id).then(() => {
        for (const other of gallery.children) other.classList.remove("active");
        item.classList.add("active");
        syncToolbar(editor);
      });
    });
    gallery.appendChild(item);
  }
}

void refreshGallery();
