import { initApp } from "./app";
import { DEFAULT_FORM } from "./form";
import { readFormFromUrl } from "./urlState";
import "./style.css";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
initApp(root, { form: readFormFromUrl(DEFAULT_FORM) });
