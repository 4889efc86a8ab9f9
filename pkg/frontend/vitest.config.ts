import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 30_000,
    hookTimeout: 200_000,
    // the live suite owns a fixed port, so keep files sequential
    fileParallelism: false,
  },
});
