import { defineConfig } from "vitest/config";

export default defineConfig({
  build: { target: "es2020" },
  test: {
    environment: "jsdom",
    // the end-to-end suite boots a real server process
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
