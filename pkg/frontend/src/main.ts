import { createApi } from "./api.js";
import { mount } from "./render.js";
import { Store } from "./store.js";

const api = createApi("");
const store = new Store(api);
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
mount(root, store);
void store.loadPatients();
