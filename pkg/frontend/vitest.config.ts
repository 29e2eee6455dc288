import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    environment: 'node',
    // The end to end test synthesizes a corpus and boots the real service.
    testTimeout: 120_000,
    hookTimeout: 180_000,
  },
});
