import { defineConfig } from "vite";

// the studio is a pure client of the generation service; point the proxy at
// a running `segsynth serve` instance during development
export default defineConfig({
  server: {
    proxy: {
      "/models": "http://127.0.0.1:8765",
      "/generate": "http://127.0.0.1:8765",
      "/interpolate": "http://127.0.0.1:8765",
      "/segment": "http://127.0.0.1:8765",
    },
  },
  build: {
    outDir: "dist",
  },
});
