/**
 * Debounce with cancel/flush, trailing edge only. Used to hold back
 * suggestion refreshes until the writer pauses.
 */
export interface Debounced<A extends unknown[]> {
    (...args: A): void;
    cancel(): void;
    flush(): void;
    pending(): boolean;
}

export function debounce<A extends unknown[]>(
    fn: (...args: A) => void,
    delayMs: number,
): Debounced<A> {
    let handle: ReturnType<typeof setTimeout> | null = null;
    let lastArgs: A | null = null;

    const debounced = (...args: A) => {
        lastArgs = args;
        if (handle !== null) {
            clearTimeout(handle);
        }
        handle = setTimeout(() => {
            handle = null;
            const callArgs = lastArgs as A;
            lastArgs = null;
            fn(...callArgs);
        }, delayMs);
    };
    debounced.cancel = () => {
        if (handle !== null) {
            clearTimeout(handle);
            handle = null;
        }
        lastArgs = null;
    };
    debounced.flush = () => {
        if (handle !== null && lastArgs !== null) {
            clearTimeout(handle);
            handle = null;
            const callArgs = lastArgs;
            lastArgs = null;
            fn(...callArgs);
        }
    };
    debounced.pending = () => handle !== null;
    return debounced;
}
