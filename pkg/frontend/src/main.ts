// Studio wiring: upload a design, inspect segments, regenerate, preview.

import { ApiError, RunApi } from "./api.js";
import { renderOverlay } from "./overlay.js";
import { renderFailure, renderPreview } from "./preview.js";
import {
  RunState,
  initialState,
  regenFailed,
  regenFinished,
  regenStarted,
  selectSegment,
} from "./state.js";

type Elements = {
  uploadForm: HTMLFormElement;
  imageInput: HTMLInputElement;
  modeSelect: HTMLSelectElement;
  screenshot: HTMLImageElement;
  overlay: HTMLElement;
  codePanel: HTMLElement;
  codeVersion: HTMLElement;
  regenButton: HTMLButtonElement;
  spinner: HTMLElement;
  errorBanner: HTMLElement;
  preview: HTMLElement;
};

export class Studio {
  private state: RunState | null = null;

  constructor(private api: RunApi, private el: Elements) {
    el.uploadForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.startRun();
    });
    el.regenButton.addEventListener("click", () => void this.regenerateSelected());
  }

  get currentState(): RunState | null {
    return this.state;
  }

  private showError(message: string, retry?: () => void): void {
    this.el.errorBanner.textContent = message;
    this.el.errorBanner.hidden = false;
    if (retry) {
      const button = document.createElement("button");
      button.textContent = "Retry";
      button.addEventListener("click", retry);
      this.el.errorBanner.appendChild(button);
    }
  }

  private clearError(): void {
    this.el.errorBanner.hidden = true;
    this.el.errorBanner.textContent = "";
  }

  async startRun(): Promise<void> {
    const file = this.el.imageInput.files?.[0];
    if (!file) return;
    this.clearError();
    try {
      const runId = await this.api.createRun(file, this.el.modeSelect.value);
      await this.loadRun(runId);
    } catch (err) {
      this.showError(`Run failed: ${String(err)}`);
    }
  }

  async loadRun(runId: string): Promise<void> {
    this.clearError();
    let tree;
    let manifest;
    try {
      [tree, manifest] = await Promise.all([
        this.api.tree(runId),
        this.api.manifest(runId),
      ]);
    } catch (err) {
      this.showError(`Could not load run: ${String(err)}`, () => {
        void this.loadRun(runId);
      });
      return;
    }
    this.state = initialState(runId, tree, manifest.fragment_versions);
    this.el.screenshot.src = this.api.inputImageUrl(runId, tree.root);
    this.renderAll();
    await this.loadSelectedCode();
    if (manifest.status === "failed") {
      renderFailure(this.el.preview, manifest.failure ?? "unknown error");
    } else {
      await this.reloadPreview();
    }
  }

  renderAll(): void {
    if (!this.state) return;
    const width = this.el.screenshot.clientWidth || this.state.tree.source_width;
    const height =
      this.el.screenshot.clientHeight || this.state.tree.source_height;
    renderOverlay(this.el.overlay, this.state.tree, width, height, {
      selected: this.state.selected,
      onSelect: (id) => void this.onSelect(id),
    });
  }

  async onSelect(segmentId: string): Promise<void> {
    if (!this.state) return;
    this.state = selectSegment(this.state, segmentId);
    this.renderAll();
    await this.loadSelectedCode();
  }

  async loadSelectedCode(): Promise<void> {
    if (!this.state) return;
    try {
      const code = await this.api.segmentCode(
        this.state.runId,
        this.state.selected,
      );
      this.el.codePanel.textContent = code.html;
      this.el.codeVersion.textContent = `v${code.version}`;
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.el.codePanel.textContent = "(no code generated for this segment)";
        this.el.codeVersion.textContent = "";
      } else {
        this.showError(`Could not load segment code: ${String(err)}`);
      }
    }
  }

  async regenerateSelected(): Promise<void> {
    if (!this.state || this.state.regenInFlight) return; // in-flight guard
    const { runId, selected } = this.state;
    this.state = regenStarted(this.state);
    this.el.spinner.hidden = false;
    this.el.regenButton.disabled = true;
    try {
      const result = await this.api.regenerate(runId, selected);
      this.state = regenFinished(this.state, result.changed, result.version);
      this.el.codePanel.textContent = result.html;
      this.el.codeVersion.textContent = `v${result.version}`;
      await this.reloadPreview();
    } catch (err) {
      this.state = regenFailed(this.state);
      this.showError(`Regeneration failed: ${String(err)}`); // old code stays
    } finally {
      this.el.spinner.hidden = true;
      this.el.regenButton.disabled = false;
    }
  }

  async reloadPreview(): Promise<void> {
    if (!this.state) return;
    try {
      const html = await this.api.finalHtml(this.state.runId);
      renderPreview(this.el.preview, html);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        renderPreview(this.el.preview, null);
      } else {
        this.showError(`Could not load preview: ${String(err)}`);
      }
    }
  }
}

export function mountStudio(api: RunApi, root: Document = document): Studio {
  const byId = <T extends HTMLElement>(id: string): T => {
    const el = root.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
  };
  return new Studio(api, {
    uploadForm: byId<HTMLFormElement>("upload-form"),
    imageInput: byId<HTMLInputElement>("image-input"),
    modeSelect: byId<HTMLSelectElement>("mode-select"),
    screenshot: byId<HTMLImageElement>("screenshot"),
    overlay: byId("overlay"),
    codePanel: byId("code-panel"),
    codeVersion: byId("code-version"),
    regenButton: byId<HTMLButtonElement>("regen-button"),
    spinner: byId("spinner"),
    errorBanner: byId("error-banner"),
    preview: byId("preview"),
  });
}
