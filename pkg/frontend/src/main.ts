import { ApiClient } from "./api.js";
import { Console } from "./ui.js";

// Served statically by the gateway itself, so same-origin by default;
// override with ?gateway=<url>&token=<token> when pointing elsewhere.
const params = new URLSearchParams(window.location.search);
const client = new ApiClient({
  baseUrl: params.get("gateway") ?? "",
  token: params.get("token") ?? undefined,
});

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
new Console(root, client).showBrowser();
