import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("api client", () => {
  it("lists images", async () => {
    const calls: string[] = [];
    const api = new ApiClient("", async (url) => {
      calls.push(url);
      return jsonResponse([
        { id: "a", filename: "a.ppm", width: 64, height: 64, annotated_count: 3 },
      ]);
    });
    const images = await api.listImages();
    expect(calls).toEqual(["/api/images"]);
    expect(images[0].annotated_count).toBe(3);
  });

  it("puts annotation documents as JSON", async () => {
    let captured: RequestInit | undefined;
    const api = new ApiClient("http://h:1", async (url, init) => {
      captured = init;
      expect(url).toBe("http://h:1/api/annotations/a");
      return jsonResponse({ image: "a.ppm", width: 1, height: 1, points: [] });
    });
    await api.putAnnotations("a", {
      image: "a.ppm",
      width: 1,
      height: 1,
      points: [],
    });
    expect(captured?.method).toBe("PUT");
    expect(JSON.parse(String(captured?.body))).toMatchObject({ image: "a.ppm" });
  });

  it("surfaces 422 validation errors with the field path", async () => {
    const api = new ApiClient("", async () =>
      jsonResponse({ error: "x out of range", field: "points[2].x" }, 422),
    );
    const err = await api
      .putAnnotations("a", { image: "a.ppm", width: 1, height: 1, points: [] })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.field).toBe("points[2].x");
    expect(err.message).toContain("out of range");
  });

  it("propagates network failures", async () => {
    const api = new ApiClient("", async () => {
      throw new TypeError("fetch failed");
    });
    await expect(api.listImages()).rejects.toThrow("fetch failed");
  });

  it("builds image file urls", () => {
    const api = new ApiClient("http://h:9");
    expect(api.imageFileUrl("abc")).toBe("http://h:9/api/images/abc/file");
  });
});
