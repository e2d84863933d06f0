/** Session view-model: every mutation round-trips the service, and the view
 * is rebuilt from fetched state only (no optimistic client-side truth). */

import {
  ApiError,
  Client,
  ModelView,
  ReportItem,
  RuleRow,
  SessionView,
  TranscriptEntry,
} from "./api.js";

export interface Banner {
  severity: "error" | "info";
  text: string;
}

export interface ViewState {
  session: SessionView | null;
  transcript: TranscriptEntry[];
  questions: string[];
  models: ModelView[];
  selectedIteration: number;
  compareIteration: number | null;
  /** Inline validation errors keyed by rule-row index (from a failed edit). */
  ruleErrors: Map<number, ReportItem>;
  banners: Banner[];
  busy: boolean;
}

export function emptyState(): ViewState {
  return {
    session: null,
    transcript: [],
    questions: [],
    models: [],
    selectedIteration: -1,
    compareIteration: null,
    ruleErrors: new Map(),
    banners: [],
    busy: false,
  };
}

export type Listener = (state: ViewState) => void;

export class SessionStore {
  readonly state: ViewState = emptyState();
  private listeners: Listener[] = [];

  constructor(
    private readonly client: Client,
    private sessionId: string,
  ) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  /** Rebuild the whole view from the server (also used on page load). */
  async refresh(): Promise<void> {
    const session = await this.client.getSession(this.sessionId);
    const transcript = (await this.client.transcript(this.sessionId)).transcript;
    const models: ModelView[] = [];
    for (let i = 0; i < session.iterations; i++) {
      models.push(await this.client.getModel(this.sessionId, i));
    }
    this.state.session = session;
    this.state.transcript = transcript;
    this.state.models = models;
    if (this.state.selectedIteration >= session.iterations) {
      this.state.selectedIteration = session.iterations - 1;
    }
    if (this.state.selectedIteration < 0 && session.iterations > 0) {
      this.state.selectedIteration = session.iterations - 1;
    }
    this.emit();
  }

  private async turn(action: () => Promise<unknown>): Promise<void> {
    this.state.busy = true;
    this.state.banners = [];
    this.emit();
    try {
      await action();
      this.state.ruleErrors = new Map();
    } catch (error) {
      if (error instanceof ApiError) {
        this.state.banners = [{ severity: "error", text: error.message }];
      } else {
        throw error;
      }
    } finally {
      this.state.busy = false;
      await this.refresh();
    }
  }

  async sendContext(text: string): Promise<void> {
    await this.turn(async () => {
      const outcome = await this.client.postContext(this.sessionId, text);
      this.state.questions = outcome.questions ?? [];
    });
  }

  async sendAnswers(text: string): Promise<void> {
    await this.turn(async () => {
      const outcome = await this.client.postAnswers(this.sessionId, text);
      this.state.questions = outcome.questions ?? [];
    });
  }

  async sendFeedback(text: string): Promise<void> {
    await this.turn(async () => {
      await this.client.postFeedback(this.sessionId, text);
    });
  }

  async discover(sup?: number): Promise<void> {
    await this.turn(async () => {
      const result = await this.client.discover(this.sessionId, sup);
      this.state.selectedIteration = result.iteration;
    });
  }

  /** Toggle or edit rules; validation failures become inline row errors. */
  async applyRuleEdits(edits: Array<{ text: string; enabled: boolean }>): Promise<void> {
    this.state.busy = true;
    this.state.banners = [];
    this.emit();
    try {
      await this.client.putRules(this.sessionId, edits);
      this.state.ruleErrors = new Map();
    } catch (error) {
      if (error instanceof ApiError && error.report) {
        const errors = new Map<number, ReportItem>();
        for (const item of error.report.items) {
          if (item.severity === "error") errors.set(item.index, item);
        }
        this.state.ruleErrors = errors;
        this.state.banners = [
          { severity: "error", text: "rule validation failed; see rows" },
        ];
      } else if (error instanceof ApiError) {
        this.state.banners = [{ severity: "error", text: error.message }];
      } else {
        throw error;
      }
    } finally {
      this.state.busy = false;
      await this.refresh();
    }
  }

  async toggleRule(row: RuleRow, enabled: boolean): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    const edits = session.rules.map((r) => ({
      text: r.rule,
      enabled: r.index === row.index ? enabled : r.enabled,
    }));
    await this.applyRuleEdits(edits);
  }

  selectIteration(iteration: number): void {
    this.state.selectedIteration = iteration;
    this.emit();
  }

  compareWith(iteration: number | null): void {
    this.state.compareIteration = iteration;
    this.emit();
  }
}

/** Rule-set difference between two model iterations, for the compare panel. */
export function ruleDiff(
  before: ModelView | undefined,
  after: ModelView | undefined,
): { added: string[]; removed: string[] } {
  const a = new Set(before?.rules ?? []);
  const b = new Set(after?.rules ?? []);
  return {
    added: [...b].filter((rule) => !a.has(rule)),
    removed: [...a].filter((rule) => !b.has(rule)),
  };
}
