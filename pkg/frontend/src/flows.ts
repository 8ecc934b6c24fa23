// Service response -> view message mapping. Pure functions so the enroll and
// verify flows are testable without a browser; outcomes are a verbatim
// mapping of service status + response fields, never computed locally.

import { STRINGS } from './strings.js';

export type MessageKind = 'success' | 'fail' | 'retry' | 'info' | 'error';

export interface ViewMessage {
  kind: MessageKind;
  text: string;
}

interface VerifyBody {
  outcome?: 'success' | 'fail';
}

interface EnrollBody {
  count?: number;
}

export function verifyMessage(status: number, body: VerifyBody | null): ViewMessage {
  if (status === 200 && body?.outcome === 'success') {
    return { kind: 'success', text: STRINGS.verifySuccess };
  }
  if (status === 200 && body?.outcome === 'fail') {
    return { kind: 'fail', text: STRINGS.verifyFail };
  }
  if (status === 422) {
    return { kind: 'retry', text: STRINGS.scanFail };
  }
  if (status === 404) {
    return { kind: 'error', text: STRINGS.unknownUser };
  }
  if (status === 409) {
    return { kind: 'error', text: STRINGS.enrollmentIncomplete };
  }
  return { kind: 'error', text: STRINGS.networkError };
}

export function enrollMessage(status: number, body: EnrollBody | null, palm: string): ViewMessage {
  if (status === 200 && body?.count !== undefined) {
    return { kind: 'info', text: `Stored ${body.count}/3 images for the ${palm} palm` };
  }
  if (status === 422) {
    return { kind: 'retry', text: STRINGS.scanFail };
  }
  if (status === 409) {
    return { kind: 'error', text: STRINGS.enrollmentComplete };
  }
  return { kind: 'error', text: STRINGS.networkError };
}

export function showMessage(el: HTMLElement, message: ViewMessage): void {
  el.textContent = message.text;
  el.dataset.kind = message.kind;
}
