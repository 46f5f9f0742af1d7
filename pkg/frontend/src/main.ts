import { ReviewApi } from './api.js';
import { ReviewApp } from './app.js';

declare global {
  interface Window {
    REVIEW_BASE_URL?: string;
    REVIEW_TOKEN?: string;
  }
}

const params = new URLSearchParams(window.location.search);
const sessionId = params.get('session') ?? 'default';
const baseUrl = window.REVIEW_BASE_URL ?? '';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app container');

const app = new ReviewApp(root, new ReviewApi(baseUrl, window.REVIEW_TOKEN), sessionId);
void app.start();
