import type {
  AuditDoc,
  GraphDoc,
  HolderDoc,
  InboxItem,
  ObjectNode,
  PlanSummary,
  ProgressDoc,
  UserRef,
} from './types.js';

/** Error body the server sends for every domain failure. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public error: string,
    public detail: string,
  ) {
    super(`${error}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class Api {
  private token: string | null = null;

  constructor(
    private base = '',
    private fetcher: FetchLike = (...args) => fetch(...args),
  ) {}

  setToken(token: string | null) {
    this.token = token;
  }

  hasToken(): boolean {
    return this.token !== null;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    if (body !== undefined) headers['Content-Type'] = 'application/json';
    const response = await this.fetcher(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let error = `http ${response.status}`;
      let detail = response.statusText;
      try {
        const parsed = await response.json();
        if (parsed && typeof parsed === 'object') {
          error = parsed.error ?? parsed.detail ?? error;
          detail = parsed.detail ?? '';
        }
      } catch {
        // non-JSON error body, keep the status text
      }
      throw new ApiError(response.status, String(error), String(detail));
    }
    return response.json() as Promise<T>;
  }

  async login(login: string, password: string): Promise<string> {
    const out = await this.request<{ token: string }>('POST', '/api/login', {
      login,
      password,
    });
    this.token = out.token;
    return out.token;
  }

  me(): Promise<UserRef & { id: number }> {
    return this.request('GET', '/api/me');
  }

  plans(): Promise<PlanSummary[]> {
    return this.request('GET', '/api/plans');
  }

  progress(planId: number): Promise<ProgressDoc> {
    return this.request('GET', `/api/plans/${planId}/progress`);
  }

  /** The server's own CSV, unmodified, for the download button. */
  async progressCsv(planId: number): Promise<string> {
    const response = await this.fetcher(
      `${this.base}/api/plans/${planId}/progress?format=csv`,
      { headers: { Authorization: `Bearer ${this.token}` } },
    );
    if (!response.ok) {
      throw new ApiError(response.status, `http ${response.status}`, '');
    }
    return response.text();
  }

  inbox(): Promise<InboxItem[]> {
    return this.request('GET', '/api/handovers/inbox');
  }

  handover(id: number): Promise<InboxItem> {
    return this.request('GET', `/api/handovers/${id}`);
  }

  confirmHandover(id: number): Promise<InboxItem> {
    return this.request('POST', `/api/handovers/${id}/confirm`);
  }

  cancelHandover(id: number): Promise<InboxItem> {
    return this.request('POST', `/api/handovers/${id}/cancel`);
  }

  object(id: number): Promise<ObjectNode & Record<string, unknown>> {
    return this.request('GET', `/api/objects/${id}`);
  }

  holder(objectId: number): Promise<HolderDoc> {
    return this.request('GET', `/api/objects/${objectId}/holder`);
  }

  graph(objectId: number, depth: number): Promise<GraphDoc> {
    return this.request('GET', `/api/objects/${objectId}/graph?depth=${depth}`);
  }

  audit(objectId: number): Promise<AuditDoc> {
    return this.request('GET', `/api/objects/${objectId}/audit`);
  }
}
