import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
    beforeEach(() => {
        vi.useFakeTimers();
    });
    afterEach(() => {
        vi.useRealTimers();
    });

    it("fires once on the trailing edge", () => {
        const calls: number[] = [];
        const d = debounce((n: number) => calls.push(n), 400);
        d(1);
        d(2);
        d(3);
        vi.advanceTimersByTime(399);
        expect(calls).toEqual([]);
        vi.advanceTimersByTime(1);
        expect(calls).toEqual([3]);
    });

    it("restarts the window on each call", () => {
        const calls: string[] = [];
        const d = debounce((s: string) => calls.push(s), 400);
        d("a");
        vi.advanceTimersByTime(300);
        d("b");
        vi.advanceTimersByTime(300);
        expect(calls).toEqual([]);
        vi.advanceTimersByTime(100);
        expect(calls).toEqual(["b"]);
    });

    it("cancel drops the pending call", () => {
        const calls: number[] = [];
        const d = debounce((n: number) => calls.push(n), 100);
        d(1);
        d.cancel();
        vi.advanceTimersByTime(500);
        expect(calls).toEqual([]);
        expect(d.pending()).toBe(false);
    });

    it("flush runs the pending call immediately", () => {
        const calls: number[] = [];
        const d = debounce((n: number) => calls.push(n), 100);
        d(7);
        d.flush();
        expect(calls).toEqual([7]);
        vi.advanceTimersByTime(500);
        expect(calls).toEqual([7]);
    });
});
