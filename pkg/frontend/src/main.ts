// Entry point: resolve the service base URL, then route by location hash
// so a mid-session refresh lands back on the same batch with every
// persisted decision restored from the server.

import { ApiClient } from './api.js';
import { App } from './ui.js';

declare global {
  interface Window {
    CHITCHAT_API?: string;
  }
}

function baseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('api');
  return window.CHITCHAT_API ?? fromQuery ?? '';
}

function route(app: App): void {
  const match = /^#\/batch\/(.+)$/.exec(window.location.hash);
  if (match && match[1]) {
    void app.showReview(decodeURIComponent(match[1]));
  } else {
    void app.showBatchList();
  }
}

export function boot(root: HTMLElement): App {
  const app = new App(new ApiClient(baseUrl()), root);
  window.addEventListener('hashchange', () => route(app));
  route(app);
  return app;
}

const mount = document.getElementById('app');
if (mount) {
  boot(mount);
}
