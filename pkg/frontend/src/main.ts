import { ApiClient } from './api';
import { App } from './app';

declare global {
  interface Window {
    CLUSTEREC_API?: string;
  }
}

// Server URL resolution order: ?api= query parameter, window.CLUSTEREC_API
// (settable in index.html before this script), then the serve default.
const params = new URLSearchParams(window.location.search);
const base = params.get('api')
  ?? window.CLUSTEREC_API
  ?? 'http://127.0.0.1:8765';

const root = document.getElementById('app');
if (root) {
  new App(root, new ApiClient(base)).start();
}
