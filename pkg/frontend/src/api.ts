// Thin client for the run-inspection HTTP API.

export type TreeNode = {
  id: string;
  region: [number, number, number, number]; // x0, y0, x1, y1 (pixels)
  depth: number;
  split_orientation: "horizontal" | "vertical" | "none";
  children: string[];
};

export type Tree = {
  schema: number;
  root: string;
  source_width: number;
  source_height: number;
  nodes: Record<string, TreeNode>;
};

export type Manifest = {
  run_id: string;
  created_at: string;
  mode: "agent" | "rule" | string;
  status: "running" | "complete" | "failed";
  failure: string | null;
  fragment_versions: Record<string, number>;
};

export type FragmentCode = {
  segment_id: string;
  html: string;
  version: number;
};

export type RegenerateResult = FragmentCode & { changed: string[] };

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) throw new ApiError(resp.status, await resp.text());
  return resp.json() as Promise<T>;
}

export class RunApi {
  constructor(private base: string = "") {}

  runUrl(runId: string): string {
    return `${this.base}/api/runs/${runId}`;
  }

  async createRun(image: Blob, mode: string, mock?: object): Promise<string> {
    const form = new FormData();
    form.append("image", image, "design.png");
    form.append("mode", mode);
    if (mock) form.append("mock", JSON.stringify(mock));
    const resp = await fetch(`${this.base}/api/runs`, { method: "POST", body: form });
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    const body = (await resp.json()) as { run_id: string };
    return body.run_id;
  }

  manifest(runId: string): Promise<Manifest> {
    return getJson(this.runUrl(runId));
  }

  tree(runId: string): Promise<Tree> {
    return getJson(`${this.runUrl(runId)}/tree`);
  }

  segmentCode(runId: string, segmentId: string): Promise<FragmentCode> {
    return getJson(`${this.runUrl(runId)}/segments/${segmentId}/code`);
  }

  async regenerate(runId: string, segmentId: string): Promise<RegenerateResult> {
    const resp = await fetch(
      `${this.runUrl(runId)}/segments/${segmentId}/regenerate`,
      { method: "POST" },
    );
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return resp.json() as Promise<RegenerateResult>;
  }

  async finalHtml(runId: string): Promise<string> {
    const resp = await fetch(`${this.runUrl(runId)}/html`);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return resp.text();
  }

  segmentImageUrl(runId: string, segmentId: string): string {
    return `${this.runUrl(runId)}/segments/${segmentId}/image`;
  }

  inputImageUrl(runId: string, rootId: string): string {
    // the root segment crop is the full design screenshot
    return this.segmentImageUrl(runId, rootId);
  }
}
