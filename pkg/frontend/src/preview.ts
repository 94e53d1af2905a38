// Sandboxed iframe preview of the assembled page.

export function renderPreview(container: HTMLElement, html: string | null): void {
  container.innerHTML = "";
  if (html === null) {
    const placeholder = document.createElement("div");
    placeholder.className = "preview-placeholder";
    placeholder.textContent = "No generated page yet.";
    container.appendChild(placeholder);
    return;
  }
  const iframe = document.createElement("iframe");
  // allow-same-origin is deliberately omitted: scripts stay fully sandboxed
  iframe.setAttribute("sandbox", "");
  iframe.srcdoc = html;
  iframe.className = "preview-frame";
  container.appendChild(iframe);
}

export function renderFailure(container: HTMLElement, detail: string): void {
  container.innerHTML = "";
  const placeholder = document.createElement("div");
  placeholder.className = "preview-placeholder preview-failed";
  placeholder.textContent = `Run failed: ${detail}`;
  container.appendChild(placeholder);
}
