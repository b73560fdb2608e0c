// @vitest-environment jsdom
import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { PerspectivesClient, SelectionLogger } from "../src/api.js";
import { PerspectiveEditor } from "../src/editor.js";
import type { MeasurementPayload, PerspectivesResponse } from "../src/types.js";

/** Minimal stand-in for the real service: spans via regex, canned phrases. */
function mockService(text: string): PerspectivesResponse {
    const pattern = /\$\d[\d,]*(?:\.\d+)?(?:\s+(?:thousand|million|billion|trillion))?/g;
    const measurements: MeasurementPayload[] = [];
    for (const match of text.matchAll(pattern)) {
        const raw = match[0];
        const start = match.index ?? 0;
        const perCapita =
            raw === "$194 billion"
                ? "about $600 per person in the US"
                : "about $1,000 per person in the US";
        measurements.push({
            span: { start, end: start + raw.length },
            raw,
            value: "330000000000",
            magnitude: 11,
            options: [
                { policy: "rule_based", phrase: perCapita },
                { policy: "crowdsourced", phrase: "about the same size as the cost of a private high-end jet" },
                { policy: "contextual", phrase: "about 4% of the United States Federal budget in 2020", score: 2.4 },
            ],
        });
    }
    return { measurements, warnings: [] };
}

function okJson(body: unknown): Response {
    return new Response(JSON.stringify(body), {
        status: 200,
        headers: { "content-type": "application/json" },
    });
}

interface Harness {
    editor: PerspectiveEditor;
    surface: HTMLElement;
    popoverHost: HTMLElement;
    status: HTMLElement;
    selectionBodies: unknown[];
}

function makeHarness(failPerspectives = false): Harness {
    document.body.innerHTML =
        '<div id="editor"></div><p id="status"></p><div id="popover-host"></div>';
    const surface = document.getElementById("editor")!;
    const popoverHost = document.getElementById("popover-host")!;
    const status = document.getElementById("status")!;
    const selectionBodies: unknown[] = [];

    const fetchLike = async (url: string, init?: RequestInit): Promise<Response> => {
        if (url.endsWith("/v1/perspectives")) {
            if (failPerspectives) {
                throw new TypeError("fetch failed");
            }
            const { text } = JSON.parse(String(init?.body)) as { text: string };
            return okJson(mockService(text));
        }
        if (url.endsWith("/v1/selections")) {
            selectionBodies.push(JSON.parse(String(init?.body)));
            return new Response(null, { status: 204 });
        }
        throw new Error(`unexpected url ${url}`);
    };

    const editor = new PerspectiveEditor({
        surface,
        popoverHost,
        statusLine: status,
        client: new PerspectivesClient("http://api.test", fetchLike),
        logger: new SelectionLogger("http://api.test", fetchLike),
        participantId: "p1",
        section: "us",
        sessionId: "doc-1",
    });
    return { editor, surface, popoverHost, status, selectionBodies };
}

async function settle(ms = 400): Promise<void> {
    await vi.advanceTimersByTimeAsync(ms);
    await vi.runAllTimersAsync();
}

function type(harness: Harness, text: string): void {
    harness.surface.textContent = text;
    harness.surface.dispatchEvent(new Event("input", { bubbles: true }));
}

function marks(harness: Harness): HTMLElement[] {
    return Array.from(harness.surface.querySelectorAll("mark.ml-underline"));
}

beforeEach(() => {
    vi.useFakeTimers();
});
afterEach(() => {
    vi.useRealTimers();
});

describe("decorations", () => {
    it("underlines a typed amount within one second of idle", async () => {
        const h = makeHarness();
        type(h, "How much is $330 billion?");
        expect(marks(h)).toHaveLength(0); // not yet: debounce pending
        await settle(400); // 400 ms idle, well under the 1 s budget
        const underlines = marks(h);
        expect(underlines).toHaveLength(1);
        expect(underlines[0]?.textContent).toBe("$330 billion");
        expect(h.surface.textContent).toBe("How much is $330 billion?");
    });

    it("removes the underline when the amount is deleted", async () => {
        const h = makeHarness();
        type(h, "How much is $330 billion?");
        await settle();
        expect(marks(h)).toHaveLength(1);
        type(h, "How much is a lot?");
        await settle();
        expect(marks(h)).toHaveLength(0);
    });

    it("decorates two amounts independently", async () => {
        const h = makeHarness();
        type(h, "Paid $3 million then $194 billion.");
        await settle();
        expect(marks(h).map((m) => m.textContent)).toEqual(["$3 million", "$194 billion"]);
    });

    it("clears decorations and shows a toast when the service is down", async () => {
        const h = makeHarness(true);
        type(h, "How much is $330 billion?");
        await settle();
        expect(marks(h)).toHaveLength(0);
        expect(h.status.textContent).toContain("unavailable");
        expect(h.surface.textContent).toBe("How much is $330 billion?");
    });
});

describe("popover", () => {
    it("opens on click with options in policy order and dismiss last", async () => {
        const h = makeHarness();
        type(h, "How much is $330 billion?");
        await settle();
        marks(h)[0]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        const buttons = Array.from(h.popoverHost.querySelectorAll("button"));
        expect(buttons.map((b) => b.dataset.policy ?? "dismiss")).toEqual([
            "rule_based",
            "crowdsourced",
            "contextual",
            "dismiss",
        ]);
        expect(buttons[buttons.length - 1]?.textContent).toContain("Don't add");
    });

    it("keeps at most one popover open", async () => {
        const h = makeHarness();
        type(h, "Paid $3 million then $194 billion.");
        await settle();
        marks(h)[0]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        marks(h)[1]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        expect(h.popoverHost.querySelectorAll(".ml-popover")).toHaveLength(1);
        expect(h.editor.popoverElementFor()?.raw).toBe("$194 billion");
    });
});

describe("insertion and logging", () => {
    it("inserts the engine phrase byte-for-byte in a parenthetical and logs once", async () => {
        const h = makeHarness();
        type(h, "Deficits would rise by $194 billion over a decade.");
        await settle();
        marks(h)[0]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        const rule = h.popoverHost.querySelector<HTMLElement>('[data-policy="rule_based"]')!;
        rule.dispatchEvent(new MouseEvent("click", { bubbles: true }));

        expect(h.surface.textContent).toBe(
            "Deficits would rise by $194 billion (about $600 per person in the US) over a decade.",
        );
        expect(h.editor.loggedEvents()).toHaveLength(1);
        const event = h.editor.loggedEvents()[0]!;
        expect(event.choice).toBe("rule_based");
        expect(event.shown).toEqual(["rule_based", "crowdsourced", "contextual"]);
        await settle();
        expect(h.selectionBodies).toHaveLength(1);
    });

    it("dismissal leaves the text unchanged and logs choice=none", async () => {
        const h = makeHarness();
        const original = "How much is $330 billion?";
        type(h, original);
        await settle();
        marks(h)[0]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        h.popoverHost
            .querySelector<HTMLElement>(".ml-dismiss")!
            .dispatchEvent(new MouseEvent("click", { bubbles: true }));

        expect(h.surface.textContent).toBe(original);
        expect(h.editor.loggedEvents()).toHaveLength(1);
        expect(h.editor.loggedEvents()[0]?.choice).toBe("none");
        expect(h.popoverHost.querySelectorAll(".ml-popover")).toHaveLength(0);
    });

    it("every popover resolution produces exactly one selection event", async () => {
        const h = makeHarness();
        type(h, "Paid $3 million then $194 billion.");
        await settle();
        marks(h)[0]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        h.popoverHost
            .querySelector<HTMLElement>('[data-policy="contextual"]')!
            .dispatchEvent(new MouseEvent("click", { bubbles: true }));
        await settle();
        marks(h)
            .find((m) => m.textContent === "$194 billion")!
            .dispatchEvent(new MouseEvent("click", { bubbles: true }));
        h.popoverHost
            .querySelector<HTMLElement>(".ml-dismiss")!
            .dispatchEvent(new MouseEvent("click", { bubbles: true }));
        expect(h.editor.loggedEvents().map((e) => e.choice)).toEqual(["contextual", "none"]);
        await settle();
        expect(h.selectionBodies).toHaveLength(2);
    });

    it("does not re-suggest on amounts inside an inserted parenthetical", async () => {
        const h = makeHarness();
        type(h, "Deficits would rise by $194 billion over a decade.");
        await settle();
        marks(h)[0]!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        h.popoverHost
            .querySelector<HTMLElement>('[data-policy="rule_based"]')!
            .dispatchEvent(new MouseEvent("click", { bubbles: true }));
        await settle(); // re-scan after the insertion

        // the mock scanner sees "$600" inside the new parenthetical, but the
        // editor must suppress it; the original amount stays decorated
        const texts = marks(h).map((m) => m.textContent);
        expect(texts).toEqual(["$194 billion"]);
        expect(h.editor.loggedEvents()).toHaveLength(1);
    });
});
