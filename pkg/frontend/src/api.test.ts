import { describe, expect, it } from "vitest";

import { ApiError, Client, type Pose } from "./api.js";

const P = (tx: number, ty: number, rz: number, ry: number): Pose => ({ tx, ty, rz, ry });

/** Capture requests and reply from a canned queue. */
function mockFetch(replies: Response[]) {
  const seen: { url: string; init?: RequestInit }[] = [];
  const fetchFn = async (url: string, init?: RequestInit) => {
    seen.push({ url, init });
    const next = replies.shift();
    if (!next) throw new Error("mock fetch exhausted");
    return next;
  };
  return { seen, fetchFn };
}

const json = (body: unknown, status = 200) =>
  new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });

describe("overlayUrl", () => {
  it("writes the full-precision decimal for each coordinate", () => {
    const client = new Client("http://svc:8410");
    const url = client.overlayUrl("case-7", P(0.1 + 0.2, -1.0000000000000002, 12, -0.5));
    expect(url).toBe(
      "http://svc:8410/v1/cases/case-7/overlay" +
        "?tx=0.30000000000000004&ty=-1.0000000000000002&rz=12&ry=-0.5",
    );
  });

  it("escapes awkward case ids", () => {
    const client = new Client("");
    expect(client.overlayUrl("a/b c", P(0, 0, 0, 0))).toContain("/v1/cases/a%2Fb%20c/overlay");
  });

  it("strips a trailing slash from the base URL", () => {
    const client = new Client("http://svc:8410/");
    expect(client.overlayUrl("x", P(0, 0, 0, 0))).toMatch(/^http:\/\/svc:8410\/v1\//);
  });
});

describe("listCases", () => {
  it("unwraps the cases array", async () => {
    const { seen, fetchFn } = mockFetch([json({ cases: [{ case_id: "c0" }] })]);
    const client = new Client("http://svc", fetchFn);
    const cases = await client.listCases();
    expect(cases).toEqual([{ case_id: "c0" }]);
    expect(seen[0]!.url).toBe("http://svc/v1/cases");
  });
});

describe("fetchOverlay", () => {
  it("returns the image blob with rewards parsed from headers", async () => {
    const payload = new Uint8Array([137, 80, 78, 71]);
    const { fetchFn } = mockFetch([
      new Response(payload, {
        status: 200,
        headers: {
          "Content-Type": "image/png",
          "X-Reward": "1.5040773967762742",
          "X-Fg-Mean": "0.9",
          "X-Bg-Mean": "0.2",
        },
      }),
    ]);
    const client = new Client("http://svc", fetchFn);
    const result = await client.fetchOverlay("c0", P(0, 0, 0, 0));
    // repr-precision header survives Number() exactly
    expect(result.reward).toBe(1.5040773967762742);
    expect(result.fgMean).toBe(0.9);
    expect(result.bgMean).toBe(0.2);
    expect(new Uint8Array(await result.blob.arrayBuffer())).toEqual(payload);
  });

  it("maps an out-of-bounds rejection to ApiError with the service detail", async () => {
    const { fetchFn } = mockFetch([json({ detail: "pose outside sampling bounds" }, 422)]);
    const client = new Client("http://svc", fetchFn);
    const err = await client.fetchOverlay("c0", P(1e6, 0, 0, 0)).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.detail).toBe("pose outside sampling bounds");
  });

  it("falls back to statusText when the error body is not JSON", async () => {
    const { fetchFn } = mockFetch([
      new Response("<html>oops</html>", { status: 500, statusText: "Internal Server Error" }),
    ]);
    const client = new Client("http://svc", fetchFn);
    const err = await client.fetchOverlay("c0", P(0, 0, 0, 0)).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.detail).toBe("Internal Server Error");
  });
});

describe("postAnnotation", () => {
  it("sends the pose as JSON float64 and returns the echoed record", async () => {
    const record = {
      case_id: "c0",
      pose: { tx_mm: 0.30000000000000004, ty_mm: -2, rz_deg: 0.5, ry_deg: 0 },
      reward: 1.23,
      fg_mean: 0.8,
      bg_mean: 0.3,
      annotator: "ows",
      timestamp: 1700000000.0,
    };
    const { seen, fetchFn } = mockFetch([json(record)]);
    const client = new Client("http://svc", fetchFn);
    const got = await client.postAnnotation("c0", P(0.1 + 0.2, -2, 0.5, 0), "ows");
    expect(got).toEqual(record);

    expect(seen[0]!.url).toBe("http://svc/v1/cases/c0/annotations");
    expect(seen[0]!.init?.method).toBe("POST");
    const body = JSON.parse(seen[0]!.init?.body as string);
    // JSON round trip must preserve the double exactly, not a rounded print
    expect(body.pose.tx_mm).toBe(0.1 + 0.2);
    expect(body.pose.tx_mm).not.toBe(0.3);
    expect(body.annotator).toBe("ows");
  });

  it("surfaces a 404 for an unknown case", async () => {
    const { fetchFn } = mockFetch([json({ detail: "no such case" }, 404)]);
    const client = new Client("http://svc", fetchFn);
    const err = await client.postAnnotation("nope", P(0, 0, 0, 0), "x").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
  });
});

describe("listAnnotations", () => {
  it("unwraps the annotations array", async () => {
    const { seen, fetchFn } = mockFetch([json({ annotations: [{ annotator: "a" }] })]);
    const client = new Client("http://svc", fetchFn);
    const rows = await client.listAnnotations("c0");
    expect(rows).toEqual([{ annotator: "a" }]);
    expect(seen[0]!.url).toBe("http://svc/v1/cases/c0/annotations");
  });
});
