/** JSON oracle protocol, server side.
 *
 * One request object in, one response object out:
 *
 *   {"op": "handshake"}                                   -> labels/features/model
 *   {"op": "classify", "image": <base64 PNG>}             -> labels/probs
 *   {"op": "features", "image": ..., "layer": <id>}       -> feature/layer
 *
 * Failures are value-level: {"error": {"code", "message", ...}} with
 * code "protocol", "decode" or "capability".
 */

import { ServedModel, UnknownLayerError, FEATURE_REDUCTION } from "./model";
import { PngDecodeError, decodePng, encodePngGray } from "./png";

export type JsonObject = { [key: string]: unknown };

function error(code: string, message: string, extra: JsonObject = {}): JsonObject {
  return { error: { code, message, ...extra } };
}

export function handleRequest(model: ServedModel, req: unknown): JsonObject {
  if (typeof req !== "object" || req === null || Array.isArray(req)) {
    return error("protocol", "request must be an object with a string 'op'");
  }
  const op = (req as JsonObject).op;
  if (typeof op !== "string") {
    return error("protocol", "request must be an object with a string 'op'");
  }
  if (op === "handshake") {
    return {
      labels: model.spec.labels,
      features: model.spec.featureLayers,
      model: model.spec.name,
      input_size: model.spec.inputSize,
      preprocessing: model.spec.preprocessing,
      feature_reduction: FEATURE_REDUCTION,
    };
  }
  if (op !== "classify" && op !== "features") {
    return error("protocol", `unknown op '${op}'`);
  }
  const image = (req as JsonObject).image;
  if (typeof image !== "string") {
    return error("protocol", `op '${op}' needs a base64 'image' field`);
  }
  // strict base64: round-trip must reproduce the canonicalized input
  const bytes = Buffer.from(image, "base64");
  if (bytes.toString("base64").replace(/=+$/, "") !== image.replace(/=+$/, "")) {
    return error("protocol", "image field is not valid base64");
  }
  let rgb;
  try {
    rgb = decodePng(bytes);
  } catch (err) {
    if (err instanceof PngDecodeError) return error("decode", err.message);
    throw err;
  }
  if (op === "classify") {
    return { labels: model.spec.labels, probs: model.classify(rgb) };
  }
  const layer = (req as JsonObject).layer;
  if (typeof layer !== "string") {
    return error("protocol", "op 'features' needs a string 'layer' field");
  }
  let fmap;
  try {
    fmap = model.feature(rgb, layer);
  } catch (err) {
    if (err instanceof UnknownLayerError) {
      return error("capability", err.message, { layers: model.spec.featureLayers });
    }
    throw err;
  }
  return {
    feature: encodePngGray(fmap.plane, fmap.width, fmap.height).toString("base64"),
    layer,
  };
}

/** Parse one request line; malformed JSON becomes a protocol error. */
export function handleLine(model: ServedModel, line: string): JsonObject {
  let req: unknown;
  try {
    req = JSON.parse(line);
  } catch {
    return error("protocol", "request line is not valid JSON");
  }
  return handleRequest(model, req);
}
