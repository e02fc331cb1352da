/** Boots the annotation console against the server that served this page. */

import { AnnotationApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new AnnotationApp(root, "");
  void app.start();
}
