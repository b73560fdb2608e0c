/**
 * Suggestion popover: one measurement's options plus the "don't add" row,
 * which is always last. At most one popover is open at a time; opening a
 * new one resolves nothing and simply closes the old.
 */
import type { MeasurementPayload, PerspectiveOption } from "./types.js";

export interface PopoverCallbacks {
    onChoose(measurement: MeasurementPayload, option: PerspectiveOption): void;
    onDismiss(measurement: MeasurementPayload): void;
}

export class SuggestionPopover {
    private readonly host: HTMLElement;
    private readonly callbacks: PopoverCallbacks;
    private element: HTMLElement | null = null;
    private current: MeasurementPayload | null = null;

    constructor(host: HTMLElement, callbacks: PopoverCallbacks) {
        this.host = host;
        this.callbacks = callbacks;
    }

    isOpen(): boolean {
        return this.element !== null;
    }

    openFor(): MeasurementPayload | null {
        return this.current;
    }

    open(measurement: MeasurementPayload, anchor?: { left: number; top: number }): void {
        this.close();
        const root = this.host.ownerDocument.createElement("div");
        root.className = "ml-popover";
        root.setAttribute("role", "dialog");
        if (anchor) {
            root.style.left = `${anchor.left}px`;
            root.style.top = `${anchor.top}px`;
        }

        const title = this.host.ownerDocument.createElement("div");
        title.className = "ml-popover-title";
        title.textContent = `Help readers understand ${measurement.raw}?`;
        root.appendChild(title);

        for (const option of measurement.options) {
            root.appendChild(this.optionButton(measurement, option));
        }

        const dismiss = this.host.ownerDocument.createElement("button");
        dismiss.type = "button";
        dismiss.className = "ml-option ml-dismiss";
        dismiss.textContent = "Don't add a perspective";
        dismiss.addEventListener("click", () => {
            const m = this.current;
            this.close();
            if (m) {
                this.callbacks.onDismiss(m);
            }
        });
        root.appendChild(dismiss);

        this.host.appendChild(root);
        this.element = root;
        this.current = measurement;
    }

    private optionButton(
        measurement: MeasurementPayload,
        option: PerspectiveOption,
    ): HTMLElement {
        const button = this.host.ownerDocument.createElement("button");
        button.type = "button";
        button.className = "ml-option";
        button.dataset.policy = option.policy;
        button.textContent = option.phrase;
        button.addEventListener("click", () => {
            this.close();
            this.callbacks.onChoose(measurement, option);
        });
        return button;
    }

    /** Close without resolving; no selection event is produced. */
    close(): void {
        this.element?.remove();
        this.element = null;
        this.current = null;
    }
}
