/** Typed client for the refinement service HTTP API. */

export interface RuleRow {
  index: number;
  rule: string;
  template: string;
  args: string[];
  enabled: boolean;
  source_round: number;
  confidence: number | null;
}

export interface SessionView {
  id: string;
  log_id: string;
  sup: number;
  state: string;
  rounds: number;
  rules: RuleRow[];
  iterations: number;
}

export interface ReportItem {
  index: number;
  severity: "error" | "warning";
  kind: string;
  message: string;
  suggestion?: string;
}

export interface Report {
  verdict: "pass" | "fail";
  items: ReportItem[];
}

export interface TurnOutcome {
  questions?: string[];
  rules?: string[];
  report?: Report | null;
}

export interface Verdict {
  rule: string;
  holds: boolean;
  exact: boolean;
  witness?: string[];
}

export interface DiscoverResult {
  iteration: number;
  sup: number;
  tree_text: string;
  dot: string;
  verdicts: Verdict[];
}

export interface ModelView {
  iteration: number;
  sup: number;
  rules: string[];
  tree_text: string;
  dot: string;
}

export interface TranscriptEntry {
  speaker: "expert" | "assistant" | "system";
  content: string;
}

export interface RuleEdit {
  text: string;
  enabled: boolean;
}

/** Error body from the service; `report` is present for validation failures. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    readonly detail: string,
    readonly report?: Report,
  ) {
    super(`${kind}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        response.status,
        payload.error ?? "unknown",
        payload.detail ?? response.statusText,
        payload.report,
      );
    }
    return payload as T;
  }

  uploadLog(content: string, name: string, format: "variants" | "csv" = "variants") {
    return this.request<{ id: string; activities: string[] }>("POST", "/logs", {
      name,
      format,
      content,
    });
  }

  activities(logId: string) {
    return this.request<{ activities: string[] }>("GET", `/logs/${logId}/activities`);
  }

  createSession(logId: string, sup: number, transport?: unknown) {
    return this.request<{ id: string }>("POST", "/sessions", {
      log_id: logId,
      sup,
      ...(transport === undefined ? {} : { transport }),
    });
  }

  getSession(sessionId: string) {
    return this.request<SessionView>("GET", `/sessions/${sessionId}`);
  }

  postContext(sessionId: string, text: string) {
    return this.request<TurnOutcome>("POST", `/sessions/${sessionId}/context`, { text });
  }

  postAnswers(sessionId: string, text: string) {
    return this.request<TurnOutcome>("POST", `/sessions/${sessionId}/answers`, { text });
  }

  postFeedback(sessionId: string, text: string) {
    return this.request<TurnOutcome>("POST", `/sessions/${sessionId}/feedback`, { text });
  }

  getRules(sessionId: string) {
    return this.request<{ rules: RuleRow[] }>("GET", `/sessions/${sessionId}/rules`);
  }

  putRules(sessionId: string, rules: RuleEdit[]) {
    return this.request<{ rules: RuleRow[]; report: Report }>(
      "PUT",
      `/sessions/${sessionId}/rules`,
      { rules },
    );
  }

  discover(sessionId: string, sup?: number) {
    return this.request<DiscoverResult>(
      "POST",
      `/sessions/${sessionId}/discover`,
      sup === undefined ? {} : { sup },
    );
  }

  getModel(sessionId: string, iteration: number) {
    return this.request<ModelView>(
      "GET",
      `/sessions/${sessionId}/model?iteration=${iteration}`,
    );
  }

  transcript(sessionId: string) {
    return this.request<{ transcript: TranscriptEntry[] }>(
      "GET",
      `/sessions/${sessionId}/transcript`,
    );
  }
}
