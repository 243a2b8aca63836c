/** Small CNN image classifier with named feature taps.
 *
 * The network is deliberately tiny (two conv blocks and one dense
 * layer) so a full train/serve/attack cycle stays in desk-scale time.
 * Weights are checked in under weights/ and loaded from JSON; inference
 * runs on the pure-JS CPU backend, so identical input bytes always
 * produce identical output bytes.
 */

import * as tf from "@tensorflow/tfjs";
import * as fs from "node:fs";

import { IMAGE_SIDE, LABELS } from "./data";
import { Rgb, rescaleToBytes, resizeRgb } from "./png";

export const MODEL_NAME = "cifar-small-cnn";
export const FEATURE_LAYERS = ["conv1", "conv2", "pool2"] as const;
export const FEATURE_REDUCTION = "channel-mean";
export const PREPROCESSING = "bilinear resize to 32x32, scale to [0, 1]";

export interface ModelSpec {
  name: string;
  inputSize: number;
  preprocessing: string;
  featureLayers: string[];
  labels: string[];
}

export function buildSmallCnn(seed = 7): tf.LayersModel {
  const model = tf.sequential();
  const init = (s: number) => tf.initializers.glorotUniform({ seed: s });
  model.add(
    tf.layers.conv2d({
      name: "conv1",
      filters: 8,
      kernelSize: 3,
      padding: "same",
      activation: "relu",
      inputShape: [IMAGE_SIDE, IMAGE_SIDE, 3],
      kernelInitializer: init(seed),
    }),
  );
  model.add(tf.layers.maxPooling2d({ name: "pool1", poolSize: 2 }));
  model.add(
    tf.layers.conv2d({
      name: "conv2",
      filters: 16,
      kernelSize: 3,
      padding: "same",
      activation: "relu",
      kernelInitializer: init(seed + 1),
    }),
  );
  model.add(tf.layers.maxPooling2d({ name: "pool2", poolSize: 2 }));
  model.add(tf.layers.flatten({ name: "flat" }));
  model.add(
    tf.layers.dense({
      name: "dense1",
      units: 32,
      activation: "relu",
      kernelInitializer: init(seed + 2),
    }),
  );
  model.add(
    tf.layers.dense({
      name: "probs",
      units: LABELS.length,
      activation: "softmax",
      kernelInitializer: init(seed + 3),
    }),
  );
  return model;
}

interface SavedModel {
  format: "tfjs-memory-v1";
  modelTopology: unknown;
  weightSpecs: tf.io.WeightsManifestEntry[];
  weightDataBase64: string;
}

export async function saveModelJson(model: tf.LayersModel, path: string): Promise<void> {
  const artifacts = await new Promise<tf.io.ModelArtifacts>((resolve, reject) => {
    model
      .save(
        tf.io.withSaveHandler(async (a) => {
          resolve(a);
          return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
        }),
      )
      .catch(reject);
  });
  const payload: SavedModel = {
    format: "tfjs-memory-v1",
    modelTopology: artifacts.modelTopology,
    weightSpecs: artifacts.weightSpecs as tf.io.WeightsManifestEntry[],
    weightDataBase64: Buffer.from(artifacts.weightData as ArrayBuffer).toString("base64"),
  };
  fs.writeFileSync(path, JSON.stringify(payload));
}

export async function loadModelJson(path: string): Promise<tf.LayersModel> {
  const raw = JSON.parse(fs.readFileSync(path, "utf-8")) as SavedModel;
  if (raw.format !== "tfjs-memory-v1") {
    throw new Error(`unsupported model file format in ${path}`);
  }
  const weightData = Uint8Array.from(Buffer.from(raw.weightDataBase64, "base64")).buffer;
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: raw.modelTopology as {},
      weightSpecs: raw.weightSpecs,
      weightData,
    }),
  );
}

export interface FeaturePlane {
  plane: Float64Array;
  width: number;
  height: number;
}

/** A loaded classifier plus its feature-tap submodel. */
export class ServedModel {
  readonly spec: ModelSpec;
  private readonly taps: tf.LayersModel;

  constructor(private readonly model: tf.LayersModel, name = MODEL_NAME) {
    this.spec = {
      name,
      inputSize: IMAGE_SIDE,
      preprocessing: PREPROCESSING,
      featureLayers: [...FEATURE_LAYERS],
      labels: [...LABELS],
    };
    this.taps = tf.model({
      inputs: this.model.inputs,
      outputs: FEATURE_LAYERS.map((n) => this.model.getLayer(n).output as tf.SymbolicTensor),
    });
  }

  static async load(path: string): Promise<ServedModel> {
    return new ServedModel(await loadModelJson(path));
  }

  private toInput(img: Rgb): tf.Tensor4D {
    const small = resizeRgb(img, IMAGE_SIDE, IMAGE_SIDE);
    const data = new Float32Array(IMAGE_SIDE * IMAGE_SIDE * 3);
    for (let p = 0; p < IMAGE_SIDE * IMAGE_SIDE; p++) {
      data[3 * p] = small.planes[0][p] / 255;
      data[3 * p + 1] = small.planes[1][p] / 255;
      data[3 * p + 2] = small.planes[2][p] / 255;
    }
    return tf.tensor4d(data, [1, IMAGE_SIDE, IMAGE_SIDE, 3]);
  }

  classify(img: Rgb): number[] {
    return tf.tidy(() => {
      const out = this.model.predict(this.toInput(img)) as tf.Tensor;
      return Array.from(out.dataSync());
    });
  }

  /** Channel-mean feature map of a tapped layer, min-max rescaled to bytes. */
  feature(img: Rgb, layer: string): FeaturePlane {
    const idx = this.spec.featureLayers.indexOf(layer);
    if (idx < 0) {
      throw new UnknownLayerError(
        `unknown feature layer '${layer}'; available: ${this.spec.featureLayers.join(", ")}`,
      );
    }
    let height = 0;
    let width = 0;
    const data = tf.tidy(() => {
      const outs = this.taps.predict(this.toInput(img)) as tf.Tensor[];
      const reduced = outs[idx].mean(-1).squeeze() as tf.Tensor2D;
      [height, width] = reduced.shape;
      return reduced.dataSync() as Float32Array;
    });
    return { plane: rescaleToBytes(Float64Array.from(data)), width, height };
  }
}

export class UnknownLayerError extends Error {}
