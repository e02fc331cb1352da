import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    // the end-to-end test builds a corpus and restarts a real service
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
