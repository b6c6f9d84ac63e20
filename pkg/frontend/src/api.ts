// Typed client for the scene API.
//
// Snapshot requests carry a monotonic sequence id: a response is applied
// only if no newer snapshot response has been applied already, so a slow
// request can never clobber the scene with an older time/threshold state
// (the fetches themselves may still overlap).

import type { DatasetInfo, Neighbor, SessionState, Snapshot } from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
    constructor(readonly code: string, message: string, readonly status: number) {
        super(message);
    }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
    const body = await resp.json();
    if (!resp.ok) {
        throw new ApiRequestError(body.code ?? "error", body.message ?? resp.statusText, resp.status);
    }
    return body as T;
}

export class ApiClient {
    private seq = 0;
    private lastApplied = 0;

    constructor(readonly serverUrl: string, private readonly fetchImpl: FetchLike = fetch) {}

    private url(path: string): string {
        return this.serverUrl.replace(/\/$/, "") + path;
    }

    private async get<T>(path: string): Promise<T> {
        return parseOrThrow<T>(await this.fetchImpl(this.url(path)));
    }

    private async post<T>(path: string, body: unknown): Promise<T> {
        return parseOrThrow<T>(await this.fetchImpl(this.url(path), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        }));
    }

    datasets(): Promise<{ datasets: DatasetInfo[] }> {
        return this.get("/datasets");
    }

    openSession(datasetId?: string): Promise<SessionState> {
        return this.post("/sessions", { dataset_id: datasetId });
    }

    sessionState(sessionId: string): Promise<SessionState> {
        return this.get(`/sessions/${sessionId}`);
    }

    /** Fetch a snapshot; returns null if a newer response was applied first. */
    async snapshot(sessionId: string, params: { t?: number; tau?: number; compare?: boolean } = {}):
        Promise<Snapshot | null> {
        const id = ++this.seq;
        const q = new URLSearchParams();
        if (params.t !== undefined) q.set("t", String(params.t));
        if (params.tau !== undefined) q.set("tau", String(params.tau));
        if (params.compare !== undefined) q.set("compare", String(params.compare));
        const suffix = q.size > 0 ? `?${q.toString()}` : "";
        const snap = await this.get<Snapshot>(`/sessions/${sessionId}/snapshot${suffix}`);
        if (id < this.lastApplied) {
            return null; // stale: a newer snapshot already landed
        }
        this.lastApplied = id;
        return snap;
    }

    select(sessionId: string, label: number): Promise<SessionState> {
        return this.post(`/sessions/${sessionId}/select`, { label });
    }

    reset(sessionId: string): Promise<SessionState> {
        return this.post(`/sessions/${sessionId}/reset`, {});
    }

    setSlice(sessionId: string, axis: string | null, coord?: number, thickness?: number):
        Promise<SessionState> {
        return this.post(`/sessions/${sessionId}/slice`, { axis, coord, thickness });
    }

    async navigate(sessionId: string, fromLabel: number): Promise<Neighbor[]> {
        const doc = await this.get<{ from: number; neighbors: Neighbor[] }>(
            `/sessions/${sessionId}/navigate?from=${fromLabel}`,
        );
        return doc.neighbors;
    }

    compare(scope = "all"): Promise<{ scope: string; pearson_r: number; lag: number }> {
        return this.get(`/compare?scope=${encodeURIComponent(scope)}`);
    }
}
