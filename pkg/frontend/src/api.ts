// Typed client for the /v1/ recommendation API. The UI never computes
// recommendation logic itself: every displayed number originates here.

export type ItemId = string | number;

export interface ItemCard {
  id: ItemId;
  title: string;
  genres: string[];
  tags: string[];
  cluster_id: number;
  explore: boolean;
}

export interface RecommendationResponse {
  user_id: string;
  mode: 'cold_start' | 'personalized';
  explore: boolean;
  k: number;
  items: ItemCard[];
  explore_item_ids: ItemId[];
  ils: number | null;
  truncated: boolean;
  explore_shortfall: boolean;
}

export interface HistoryEntry {
  cluster_id: number;
  item_id: ItemId;
}

export interface UserResponse {
  user_id: string;
  prefs: string[];
  history: HistoryEntry[];
  viewed: ItemId[];
  history_length: number;
  mode: 'cold_start' | 'personalized';
}

export interface InteractionResponse {
  user_id: string;
  item_id: ItemId;
  cluster_id: number;
  history_length: number;
  mode: 'cold_start' | 'personalized';
}

export interface HealthResponse {
  status: string;
  items: number;
  clusters: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = 'unknown';
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as { error?: { code?: string; message?: string } };
    if (body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      headers: { 'Content-Type': 'application/json' },
      ...init,
    });
    if (!resp.ok) {
      throw await parseError(resp);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<HealthResponse> {
    return this.request('/v1/health');
  }

  createUser(prefs: string[]): Promise<{ user_id: string; prefs: string[] }> {
    return this.request('/v1/users', {
      method: 'POST',
      body: JSON.stringify({ prefs }),
    });
  }

  getUser(userId: string): Promise<UserResponse> {
    return this.request(`/v1/users/${encodeURIComponent(userId)}`);
  }

  getRecommendations(
    userId: string,
    k: number,
    explore: boolean,
  ): Promise<RecommendationResponse> {
    const query = new URLSearchParams({ k: String(k), explore: String(explore) });
    return this.request(
      `/v1/users/${encodeURIComponent(userId)}/recommendations?${query}`,
    );
  }

  postInteraction(userId: string, itemId: ItemId): Promise<InteractionResponse> {
    return this.request(`/v1/users/${encodeURIComponent(userId)}/interactions`, {
      method: 'POST',
      body: JSON.stringify({ item_id: itemId }),
    });
  }
}
