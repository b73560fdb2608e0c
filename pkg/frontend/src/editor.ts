/**
 * The writing surface. A contenteditable div holds the document text; after
 * a typing pause the full text goes to the perspectives service and each
 * returned span is wrapped in an underline mark. Clicking a mark opens the
 * suggestion popover; choosing an option inserts the phrase in a
 * parenthetical right after the amount and logs the decision, dismissing
 * logs a "none" decision. Amounts sitting inside previously inserted
 * parentheticals are never re-underlined.
 */
import { PerspectivesClient, SelectionLogger } from "./api.js";
import { debounce, type Debounced } from "./debounce.js";
import { SuggestionPopover } from "./popover.js";
import type { MeasurementPayload, PerspectiveOption, Policy, SelectionEvent } from "./types.js";

export interface EditorOptions {
    surface: HTMLElement;
    popoverHost: HTMLElement;
    statusLine: HTMLElement;
    client: PerspectivesClient;
    logger: SelectionLogger;
    participantId: string;
    section: string;
    sessionId: string;
    debounceMs?: number;
}

const DEFAULT_DEBOUNCE_MS = 400;

export class PerspectiveEditor {
    private readonly options: EditorOptions;
    private readonly popover: SuggestionPopover;
    private readonly refreshSoon: Debounced<[]>;
    private readonly insertedPhrases = new Set<string>();
    private measurements: MeasurementPayload[] = [];
    private events: SelectionEvent[] = [];

    constructor(options: EditorOptions) {
        this.options = { debounceMs: DEFAULT_DEBOUNCE_MS, ...options };
        this.popover = new SuggestionPopover(options.popoverHost, {
            onChoose: (m, option) => this.insertPerspective(m, option),
            onDismiss: (m) => this.dismiss(m),
        });
        this.refreshSoon = debounce(() => {
            void this.refreshDecorations();
        }, this.options.debounceMs ?? DEFAULT_DEBOUNCE_MS);

        options.surface.setAttribute("contenteditable", "true");
        options.surface.addEventListener("input", () => this.refreshSoon());
        options.surface.addEventListener("click", (event) => this.onSurfaceClick(event));
    }

    /** Document text as the service sees it. */
    text(): string {
        return this.options.surface.textContent ?? "";
    }

    setText(text: string): void {
        this.options.surface.textContent = text;
        this.refreshSoon();
    }

    /** Selection events produced so far (also posted to the service). */
    loggedEvents(): readonly SelectionEvent[] {
        return this.events;
    }

    decoratedMeasurements(): readonly MeasurementPayload[] {
        return this.measurements;
    }

    /** Fetch fresh decorations now; normally ridden through the debounce. */
    async refreshDecorations(): Promise<void> {
        const text = this.text();
        if (!text.trim()) {
            this.measurements = [];
            this.render();
            return;
        }
        let response;
        try {
            response = await this.options.client.fetchPerspectives(text);
        } catch {
            this.measurements = [];
            this.render();
            this.setStatus("Suggestions unavailable; check the perspectives service.");
            return;
        }
        if (response === null) {
            return; // superseded by a newer request
        }
        if (this.text() !== text) {
            return; // the document moved on while we were waiting
        }
        this.measurements = response.measurements.filter(
            (m) => !this.isInsideInsertedParenthetical(m, text),
        );
        this.setStatus(response.warnings.join(" ") || "");
        this.render();
    }

    /** True when the span sits inside a parenthetical this editor inserted. */
    private isInsideInsertedParenthetical(m: MeasurementPayload, text: string): boolean {
        for (const phrase of this.insertedPhrases) {
            const needle = `(${phrase})`;
            let from = 0;
            for (;;) {
                const at = text.indexOf(needle, from);
                if (at < 0) {
                    break;
                }
                if (m.span.start >= at && m.span.end <= at + needle.length) {
                    return true;
                }
                from = at + 1;
            }
        }
        return false;
    }

    private render(): void {
        const doc = this.options.surface.ownerDocument;
        const text = this.text();
        const fragment = doc.createDocumentFragment();
        let cursor = 0;
        this.measurements.forEach((m, index) => {
            if (m.span.start > cursor) {
                fragment.appendChild(doc.createTextNode(text.slice(cursor, m.span.start)));
            }
            const mark = doc.createElement("mark");
            mark.className = "ml-underline";
            mark.dataset.index = String(index);
            mark.textContent = text.slice(m.span.start, m.span.end);
            fragment.appendChild(mark);
            cursor = m.span.end;
        });
        if (cursor < text.length) {
            fragment.appendChild(doc.createTextNode(text.slice(cursor)));
        }
        this.options.surface.replaceChildren(fragment);
    }

    private onSurfaceClick(event: Event): void {
        const target = event.target as HTMLElement | null;
        const mark = target?.closest?.("mark.ml-underline") as HTMLElement | null;
        if (!mark || mark.dataset.index === undefined) {
            return;
        }
        const measurement = this.measurements[Number(mark.dataset.index)];
        if (measurement) {
            this.openPopover(measurement, mark);
        }
    }

    openPopover(measurement: MeasurementPayload, anchorEl?: HTMLElement): void {
        const anchor = anchorEl?.getBoundingClientRect
            ? { left: anchorEl.getBoundingClientRect().left, top: anchorEl.getBoundingClientRect().bottom }
            : undefined;
        this.popover.open(measurement, anchor);
    }

    popoverIsOpen(): boolean {
        return this.popover.isOpen();
    }

    popoverElementFor(): MeasurementPayload | null {
        return this.popover.openFor();
    }

    /** Insert " (<phrase>)" right after the amount, log, and re-scan. */
    private insertPerspective(measurement: MeasurementPayload, option: PerspectiveOption): void {
        const text = this.text();
        const end = measurement.span.end;
        if (text.slice(measurement.span.start, end) !== measurement.raw) {
            this.setStatus("The text changed; suggestion skipped.");
            return;
        }
        const updated = `${text.slice(0, end)} (${option.phrase})${text.slice(end)}`;
        this.insertedPhrases.add(option.phrase);
        this.options.surface.textContent = updated;
        this.measurements = [];
        this.recordSelection(measurement, option.policy);
        this.refreshSoon();
    }

    private dismiss(measurement: MeasurementPayload): void {
        this.recordSelection(measurement, "none");
    }

    private recordSelection(measurement: MeasurementPayload, choice: Policy | "none"): void {
        const event: SelectionEvent = {
            participant_id: this.options.participantId,
            quote_id: `${this.options.sessionId}:${measurement.span.start}:${measurement.raw}`,
            section: this.options.section,
            focal_value: measurement.value,
            shown: measurement.options.map((o) => o.policy),
            choice,
            session_id: this.options.sessionId,
        };
        this.events.push(event);
        void this.options.logger.post(event);
    }

    private setStatus(message: string): void {
        this.options.statusLine.textContent = message;
    }
}
