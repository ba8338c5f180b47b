// Browser entry point. Service URL and worker id come from query params:
//   index.html?service=http://127.0.0.1:8765&worker=w1

import { ApiClient } from './api.js';
import { AnnotationSession } from './session.js';
import { SurveyView } from './view.js';

function param(name: string, fallback: string): string {
    return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

const service = param('service', 'http://127.0.0.1:8765');
const worker = param('worker', `anon-${Math.random().toString(36).slice(2, 10)}`);

const root = document.getElementById('app');
if (!root) {
    throw new Error('missing #app container');
}

const session = new AnnotationSession(new ApiClient(service), worker);
void new SurveyView(root, session, param('images', '')).start();
