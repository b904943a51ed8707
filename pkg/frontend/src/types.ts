/** Wire types mirroring the review-service JSON API. */

export type Verdict = "accepted" | "rejected";
export type ItemStatus = "pending" | Verdict;

export interface ReviewItem {
  pair_id: string;
  image_path: string;
  caption: string;
  boxes: [number, number, number, number][];
  category: string;
  source: string;
  width: number;
  height: number;
  status: ItemStatus;
  reviewer: string;
  timestamp: number;
  reason: string;
}

export interface CategorySummary {
  category: string;
  pending: number;
  accepted: number;
  rejected: number;
  total: number;
}

export interface ItemsPage {
  items: ReviewItem[];
  cursor: string;
  total: number;
}

export interface ExportedSample {
  id: string;
  image_path: string;
  text: string;
  boxes: number[][];
  category: string;
  splits: string[];
}

export interface VerdictRequest {
  verdict: Verdict;
  reviewer: string;
  reason?: string;
}
