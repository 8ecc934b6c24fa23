// UI string table. The three verification-outcome strings live here exactly
// once each and are rendered verbatim when the matching service status
// arrives; the UI never invents or rewrites an outcome.
export const STRINGS = {
  verifySuccess: 'Palmprint Verification Success',
  verifyFail: 'Palmprint Verification Fail',
  scanFail: 'Scan fail, please take photo again',
  unknownUser: 'Unknown user: register a palm first',
  enrollmentIncomplete: 'Enrollment incomplete: store 3 images for a palm first',
  enrollmentComplete: 'This palm already has 3 images; reset to re-enroll',
  noCamera: 'Camera unavailable: use file upload instead',
  networkError: 'Request failed, check the service and retry',
  needUser: 'Enter a user id first',
  needFrame: 'Capture or upload a palm image first',
} as const;

export type StringKey = keyof typeof STRINGS;
