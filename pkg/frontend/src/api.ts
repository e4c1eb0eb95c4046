// HTTP client for the workbench service. All calls are same-origin; the
// page is served by `mlwb serve --static-dir`, so relative URLs hit the
// service that owns the session.

export interface LayerJson {
  kind: string;
  params: Record<string, unknown>;
}

export interface ModelJson {
  input: Record<string, unknown> & { kind: string };
  layers: LayerJson[];
  loss: string;
  optimizer: Record<string, unknown> & { kind: string };
}

export interface FindingJson {
  layer_index: number | null;
  field: string;
  severity: string;
  message: string;
}

export interface ReportJson {
  findings: FindingJson[];
  ok: boolean;
}

export interface SessionState {
  id: string;
  mode: string;
  model: ModelJson;
  report: ReportJson;
  compiled_in_sync: boolean;
  can_undo: boolean;
  can_redo: boolean;
  training: boolean;
  has_dataset: boolean;
}

export interface DatasetPreview {
  n: number;
  shown: number;
  x: unknown[];
  y: unknown[];
  x_shape: number[];
  y_shape: number[];
  source: string;
  category_labels: string[] | null;
  adapted_output_layer?: boolean;
}

export interface TrainMetrics {
  loss: number;
  accuracy: number | null;
  val_loss: number | null;
  val_accuracy: number | null;
  batch_duration_ms: number;
}

export interface WorkbenchEvent {
  type: string;
  session: string;
  // field_flag
  path?: string;
  state?: string;
  message?: string;
  // model_changed
  origin?: string;
  ok?: boolean;
  // train_event
  kind?: string;
  epoch?: number;
  batch?: number;
  metrics?: TrainMetrics;
  // mode_changed
  mode?: string;
  // ready
  training?: boolean;
}

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
    this.detail = detail;
  }
}

async function call<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init);
  if (!res.ok) {
    let detail = `${res.status}`;
    try {
      const body = await res.json();
      if (body && typeof body.detail === "string") detail = body.detail;
      else detail = JSON.stringify(body);
    } catch {
      // body was not JSON; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

function post<T>(path: string, body?: unknown): Promise<T> {
  return call<T>(path, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: body === undefined ? "{}" : JSON.stringify(body),
  });
}

export function editBody(kind: string, payload: Record<string, unknown>): object {
  return { kind, payload };
}

export const api = {
  createSession(): Promise<SessionState> {
    return post("session");
  },
  getState(sid: string): Promise<SessionState> {
    return call(`session/${sid}/model`);
  },
  edit(sid: string, kind: string, payload: Record<string, unknown>): Promise<SessionState> {
    return post(`session/${sid}/edit`, editBody(kind, payload));
  },
  undo(sid: string): Promise<SessionState> {
    return post(`session/${sid}/undo`);
  },
  redo(sid: string): Promise<SessionState> {
    return post(`session/${sid}/redo`);
  },
  setMode(sid: string, mode: string): Promise<SessionState> {
    return post(`session/${sid}/mode`, { mode });
  },
  importTensor(sid: string, x: string, y: string): Promise<DatasetPreview> {
    return post(`session/${sid}/import/tensor`, { x, y });
  },
  importCsv(sid: string, text: string, config: object): Promise<DatasetPreview> {
    return post(`session/${sid}/import/csv`, { text, config });
  },
  importImages(sid: string, payload: object): Promise<DatasetPreview> {
    return post(`session/${sid}/import/images`, payload);
  },
  datasetPreview(sid: string, k: number): Promise<DatasetPreview> {
    return call(`session/${sid}/dataset/preview?k=${k}`);
  },
  train(sid: string, config: object): Promise<unknown> {
    return post(`session/${sid}/train`, config);
  },
  stopTraining(sid: string): Promise<unknown> {
    return post(`session/${sid}/train/stop`);
  },
  predict(sid: string, literal: string): Promise<{ output: number[][]; output_shape: number[] }> {
    return post(`session/${sid}/predict`, { input: literal });
  },
  visualize(sid: string, kind: string, payload?: object): Promise<Record<string, unknown>> {
    if (payload === undefined) return call(`session/${sid}/visualize/${kind}`);
    return post(`session/${sid}/visualize/${kind}`, payload);
  },
};

export type EventHandler = (event: WorkbenchEvent) => void;

const EVENT_TYPES = [
  "ready",
  "model_changed",
  "field_flag",
  "mode_changed",
  "dataset_changed",
  "train_event",
  "train_error",
];

// The stream uses named SSE events, one listener per type. The factory
// argument exists so tests can inject a fake EventSource.
export function connectEvents(
  sid: string,
  onEvent: EventHandler,
  onStateChange?: (connected: boolean) => void,
  sourceFactory?: (url: string) => EventSource,
): () => void {
  const make = sourceFactory ?? ((url: string) => new EventSource(url));
  const source = make(`session/${sid}/events`);
  for (const type of EVENT_TYPES) {
    source.addEventListener(type, (raw) => {
      const msg = raw as MessageEvent;
      let parsed: WorkbenchEvent;
      try {
        parsed = JSON.parse(msg.data) as WorkbenchEvent;
      } catch {
        return;
      }
      onEvent(parsed);
    });
  }
  source.onopen = () => onStateChange?.(true);
  source.onerror = () => onStateChange?.(false);
  return () => source.close();
}
