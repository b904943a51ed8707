/** Thin typed client for the review-service HTTP JSON API. */

import type {
  CategorySummary,
  ExportedSample,
  ItemsPage,
  ReviewItem,
  VerdictRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  async categories(): Promise<CategorySummary[]> {
    const body = await this.request<{ categories: CategorySummary[] }>("/categories");
    return body.categories;
  }

  async items(category: string, cursor = "", pageSize = 50): Promise<ItemsPage> {
    const params = new URLSearchParams({ category, page_size: String(pageSize) });
    if (cursor) params.set("cursor", cursor);
    return this.request<ItemsPage>(`/items?${params.toString()}`);
  }

  async submitVerdict(pairId: string, body: VerdictRequest): Promise<ReviewItem> {
    return this.request<ReviewItem>(
      `/items/${encodeURIComponent(pairId)}/verdict`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
  }

  async exportTestSet(cap = 100): Promise<ExportedSample[]> {
    const body = await this.request<{ samples: ExportedSample[] }>(`/export?cap=${cap}`);
    return body.samples;
  }

  imageUrl(pairId: string): string {
    return `${this.baseUrl}/items/${encodeURIComponent(pairId)}/image`;
  }
}
