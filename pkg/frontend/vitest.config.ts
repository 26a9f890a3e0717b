import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // integration spins up the Python service and trains a throwaway bundle
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
