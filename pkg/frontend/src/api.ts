// Thin client over the palmkit service HTTP API. Every decision (scores,
// thresholds, outcomes) is made server-side; this module only moves bytes.

export interface PointDto {
  x: number;
  y: number;
}

export interface DetectionDto {
  class_id: number;          // 0 = double-finger-gap, 1 = palm-center
  confidence: number;
  center: PointDto;
  width: number;
  height: number;
}

export interface DetectResponse {
  status: 'ok' | 'incomplete';
  detections: DetectionDto[];
  missing?: string;
  keypoints?: { a: PointDto; b: PointDto; c: PointDto };
  roi_quad?: PointDto[];     // TL, TR, BR, BL
}

export interface ApiResult<T = unknown> {
  status: number;            // HTTP status; 0 on network failure
  body: T | null;
}

export type Palm = 'left' | 'right';

export interface Counts {
  left: number;
  right: number;
}

async function request<T>(url: string, init?: RequestInit): Promise<ApiResult<T>> {
  try {
    const response = await fetch(url, init);
    let body: T | null = null;
    try {
      body = (await response.json()) as T;
    } catch {
      body = null;
    }
    return { status: response.status, body };
  } catch {
    return { status: 0, body: null };
  }
}

function imageForm(image: Blob, extra: Record<string, string> = {}): FormData {
  const form = new FormData();
  form.append('image', image, 'frame.png');
  for (const [key, value] of Object.entries(extra)) {
    form.append(key, value);
  }
  return form;
}

export class ServiceClient {
  constructor(private readonly base: string = '') {}

  detect(image: Blob): Promise<ApiResult<DetectResponse>> {
    return request(`${this.base}/detect`, { method: 'POST', body: imageForm(image) });
  }

  enroll(user: string, palm: Palm, image: Blob): Promise<ApiResult<{ count: number }>> {
    return request(`${this.base}/enroll`, {
      method: 'POST',
      body: imageForm(image, { user, palm }),
    });
  }

  verify(user: string, image: Blob): Promise<ApiResult<{ outcome: 'success' | 'fail'; score: number }>> {
    return request(`${this.base}/verify`, {
      method: 'POST',
      body: imageForm(image, { user }),
    });
  }

  counts(user: string): Promise<ApiResult<{ counts: Counts }>> {
    return request(`${this.base}/enrollments/${encodeURIComponent(user)}`);
  }

  reset(user: string, palm: Palm): Promise<ApiResult<{ count: number }>> {
    return request(`${this.base}/enrollments/${encodeURIComponent(user)}/${palm}`, {
      method: 'DELETE',
    });
  }
}
