/** Wire types for the moneylens HTTP API. */

export type Policy = "rule_based" | "crowdsourced" | "contextual";

export const POLICY_ORDER: readonly Policy[] = ["rule_based", "crowdsourced", "contextual"];

export interface Span {
    start: number;
    end: number;
}

export interface PerspectiveOption {
    policy: Policy;
    phrase: string;
    score?: number | null;
    reference_id?: string | null;
    multiplier?: string | null;
    per_capita_amount?: string | null;
}

export interface MeasurementPayload {
    span: Span;
    raw: string;
    value: string;
    magnitude?: number | null;
    options: PerspectiveOption[];
}

export interface PerspectivesResponse {
    measurements: MeasurementPayload[];
    warnings: string[];
}

/** One keep/skip decision; `choice` must be among `shown` or "none". */
export interface SelectionEvent {
    participant_id: string;
    quote_id: string;
    section: string;
    focal_value: string;
    shown: Policy[];
    choice: Policy | "none";
    timestamp?: string;
    session_id?: string;
}
