import { PerspectivesClient, SelectionLogger } from "./api.js";
import { PerspectiveEditor } from "./editor.js";

function requireEl(id: string): HTMLElement {
    const el = document.getElementById(id);
    if (!el) {
        throw new Error(`missing #${id}`);
    }
    return el;
}

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "";
const participant = params.get("participant") ?? "writer-1";
const section = params.get("section") ?? "us";

const editor = new PerspectiveEditor({
    surface: requireEl("editor"),
    popoverHost: requireEl("popover-host"),
    statusLine: requireEl("status"),
    client: new PerspectivesClient(apiBase),
    logger: new SelectionLogger(apiBase),
    participantId: participant,
    section,
    sessionId: `doc-${Date.now().toString(36)}`,
});

editor.setText(
    "The agency said the program would cost $330 billion over the next decade.",
);
