// Per-page analysis session: the uploaded pair, the latest server response,
// the current threshold, and the view mode. Threshold changes round-trip to
// the server (the service owns perceived/mismatch semantics); rapid slider
// moves are debounced so only the final value is queried.

import { AnalysisClient, AnalysisResponse, ApiError, ElementResult } from "./api";
import { ViewMode, visibleElements } from "./overlay";

export interface SessionEvents {
  onAnalysis?: (response: AnalysisResponse) => void;
  onError?: (message: string) => void;
  onBusy?: (busy: boolean) => void;
}

export class ScreenSession {
  image: Blob | null = null;
  hierarchy: Blob | null = null;
  analysis: AnalysisResponse | null = null;
  threshold: number | null = null; // null = use the checkpoint default
  viewMode: ViewMode = "mismatches";
  lastError: string | null = null;

  private debounceTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly client: AnalysisClient,
    private readonly events: SessionEvents = {},
    private readonly debounceMs = 150,
  ) {}

  get canAnalyze(): boolean {
    return this.image !== null && this.hierarchy !== null;
  }

  setFiles(image: Blob | null, hierarchy: Blob | null): void {
    if (image) this.image = image;
    if (hierarchy) this.hierarchy = hierarchy;
  }

  async analyze(): Promise<void> {
    if (!this.canAnalyze) {
      return;
    }
    this.events.onBusy?.(true);
    try {
      const response = await this.client.analyze(
        this.image!,
        this.hierarchy!,
        this.threshold ?? undefined,
      );
      this.analysis = response;
      this.lastError = null;
      this.events.onAnalysis?.(response);
    } catch (error) {
      if (error instanceof DOMException && error.name === "AbortError") {
        return; // superseded by a newer request
      }
      this.lastError = error instanceof ApiError ? error.reason : String(error);
      this.events.onError?.(this.lastError);
    } finally {
      this.events.onBusy?.(false);
    }
  }

  // The slider reflects the new value immediately; the query fires once the
  // movement settles.
  setThreshold(value: number): void {
    this.threshold = value;
    if (this.analysis === null) {
      return;
    }
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.analyze();
    }, this.debounceMs);
  }

  toggleViewMode(): ViewMode {
    this.viewMode = this.viewMode === "mismatches" ? "all" : "mismatches";
    return this.viewMode;
  }

  visible(): ElementResult[] {
    if (!this.analysis) return [];
    return visibleElements(this.analysis.elements, this.viewMode);
  }
}
