import { Client } from "./api.js";
import { AnnotatorUi } from "./ui.js";

// ?service=http://host:port overrides the default local service address.
const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8410";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const ui = new AnnotatorUi(root, new Client(base));
void ui.start();
