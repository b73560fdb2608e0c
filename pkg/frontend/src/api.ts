/**
 * HTTP client for the perspectives service.
 *
 * - Suggestion requests are latest-wins: starting a new one aborts the one
 *   in flight, so stale decorations never land on fresh text.
 * - Selection logging retries once and then queues locally; `flushQueue`
 *   re-sends queued events when the service is back.
 */
import type { PerspectivesResponse, SelectionEvent } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceUnavailableError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "ServiceUnavailableError";
    }
}

function isAbortError(error: unknown): boolean {
    return error instanceof Error && error.name === "AbortError";
}

export class PerspectivesClient {
    private readonly baseUrl: string;
    private readonly fetchImpl: FetchLike;
    private inflight: AbortController | null = null;

    constructor(baseUrl: string, fetchImpl: FetchLike = (...args) => fetch(...args)) {
        this.baseUrl = baseUrl.replace(/\/$/, "");
        this.fetchImpl = fetchImpl;
    }

    /**
     * Fetch suggestions for the full document text. Returns null when the
     * request was superseded by a newer one.
     */
    async fetchPerspectives(text: string): Promise<PerspectivesResponse | null> {
        this.inflight?.abort();
        const controller = new AbortController();
        this.inflight = controller;
        let response: Response;
        try {
            response = await this.fetchImpl(`${this.baseUrl}/v1/perspectives`, {
                method: "POST",
                headers: { "content-type": "application/json" },
                body: JSON.stringify({ text }),
                signal: controller.signal,
            });
        } catch (error) {
            if (isAbortError(error)) {
                return null;
            }
            throw new ServiceUnavailableError(`perspectives request failed: ${String(error)}`);
        } finally {
            if (this.inflight === controller) {
                this.inflight = null;
            }
        }
        if (!response.ok) {
            throw new ServiceUnavailableError(`perspectives request failed: HTTP ${response.status}`);
        }
        const body = (await response.json()) as PerspectivesResponse;
        if (!Array.isArray(body.measurements)) {
            throw new ServiceUnavailableError("perspectives response missing measurements");
        }
        return body;
    }
}

export class SelectionLogger {
    private readonly baseUrl: string;
    private readonly fetchImpl: FetchLike;
    private readonly queue: SelectionEvent[] = [];

    constructor(baseUrl: string, fetchImpl: FetchLike = (...args) => fetch(...args)) {
        this.baseUrl = baseUrl.replace(/\/$/, "");
        this.fetchImpl = fetchImpl;
    }

    private async send(event: SelectionEvent): Promise<void> {
        const response = await this.fetchImpl(`${this.baseUrl}/v1/selections`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(event),
        });
        if (!response.ok) {
            throw new ServiceUnavailableError(`selection post failed: HTTP ${response.status}`);
        }
    }

    /** Post one event; on failure retry once, then keep it for later. */
    async post(event: SelectionEvent): Promise<boolean> {
        for (let attempt = 0; attempt < 2; attempt++) {
            try {
                await this.send(event);
                return true;
            } catch {
                // fall through to retry, then queue
            }
        }
        this.queue.push(event);
        return false;
    }

    pendingCount(): number {
        return this.queue.length;
    }

    /** Re-send queued events in order; stops at the first failure. */
    async flushQueue(): Promise<number> {
        let sent = 0;
        while (this.queue.length > 0) {
            const event = this.queue[0]!;
            try {
                await this.send(event);
            } catch {
                break;
            }
            this.queue.shift();
            sent += 1;
        }
        return sent;
    }
}
