/// <reference types="vitest/config" />
import { defineConfig } from "vite";

export default defineConfig({
  server: {
    // During development the Python service runs separately; proxy API calls
    // to it so the app can use same-origin requests.
    proxy: { "/api": "http://127.0.0.1:8000" },
  },
  test: {
    environment: "jsdom",
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
