import { defineConfig } from "vitest/config";

// Dev server proxies /api to a locally running `loqa serve` so the page
// can be opened on the vite port without CORS fuss.
export default defineConfig({
  server: {
    port: 5173,
    proxy: {
      "/api": {
        target: process.env.LOQA_API ?? "http://127.0.0.1:8000",
        changeOrigin: true,
      },
    },
  },
  test: {
    environment: "jsdom",
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
