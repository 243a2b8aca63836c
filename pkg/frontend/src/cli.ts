/** Command line: train the small CNN, serve it over the oracle
 * protocol, or run trend checks over harness records.
 *
 * Exit codes: 0 success, 1 invalid arguments or input data, 2 runtime
 * failure.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";

import * as tf from "@tensorflow/tfjs";

import { IMAGE_SIDE, LABELS, makeDataset } from "./data";
import { ServedModel, buildSmallCnn, saveModelJson, MODEL_NAME } from "./model";
import { makeHttpServer, serveStdio } from "./server";
import { TrendError, evalTrend, formatTrendReport } from "./trend";

const DEFAULT_WEIGHTS = path.resolve(__dirname, "..", "weights", `${MODEL_NAME}.json`);

const USAGE = `usage: cli <command> [options]

commands:
  serve        answer oracle-protocol requests
                 --model PATH      weights json (default: bundled ${MODEL_NAME})
                 --transport MODE  stdio | http (default stdio)
                 --host HOST       http bind host (default 127.0.0.1)
                 --port PORT       http port (default 0 = ephemeral)
                 --device DEV      cpu only; recorded for provenance
  train        train the small cnn on the synthetic dataset
                 --out PATH        weights json to write (default bundled path)
                 --per-class N     training samples per class (default 200)
                 --epochs N        training epochs (default 8)
                 --min-accuracy A  fail below this held-out accuracy (default 0.9)
  eval-trend   qualitative checks over a records.csv
                 --records PATH    records csv from an attack run
                 --json            emit the full report as json
`;

async function cmdServe(args: string[]): Promise<number> {
  const { values } = parseArgs({
    args,
    options: {
      model: { type: "string", default: DEFAULT_WEIGHTS },
      transport: { type: "string", default: "stdio" },
      host: { type: "string", default: "127.0.0.1" },
      port: { type: "string", default: "0" },
      device: { type: "string", default: "cpu" },
    },
  });
  if (values.transport !== "stdio" && values.transport !== "http") {
    process.stderr.write(`error: unknown transport '${values.transport}'\n`);
    return 1;
  }
  if (values.device !== "cpu") {
    process.stderr.write(`error: only --device cpu is supported, got '${values.device}'\n`);
    return 1;
  }
  const model = await ServedModel.load(values.model!);
  if (values.transport === "http") {
    const server = makeHttpServer(model);
    const port = Number(values.port);
    await new Promise<void>((resolve) => server.listen(port, values.host, resolve));
    const addr = server.address();
    const bound = typeof addr === "object" && addr ? addr.port : port;
    process.stdout.write(`listening on http://${values.host}:${bound}/v1/oracle\n`);
    await new Promise<void>((resolve) => server.on("close", resolve));
    return 0;
  }
  await new Promise<void>((resolve) => serveStdio(model, resolve));
  return 0;
}

async function cmdTrain(args: string[]): Promise<number> {
  const { values } = parseArgs({
    args,
    options: {
      out: { type: "string", default: DEFAULT_WEIGHTS },
      "per-class": { type: "string", default: "200" },
      epochs: { type: "string", default: "8" },
      "min-accuracy": { type: "string", default: "0.9" },
    },
  });
  const perClass = Number(values["per-class"]);
  const epochs = Number(values.epochs);
  const minAcc = Number(values["min-accuracy"]);
  if (!(perClass > 0) || !(epochs > 0)) {
    process.stderr.write("error: --per-class and --epochs must be positive\n");
    return 1;
  }

  const train = makeDataset(perClass, 1);
  const heldOut = makeDataset(Math.max(20, Math.floor(perClass / 4)), 2);
  const xs = tf.tensor4d(train.images, [train.count, IMAGE_SIDE, IMAGE_SIDE, 3]);
  const ys = tf.oneHot(tf.tensor1d(train.labels, "int32"), LABELS.length);
  const vx = tf.tensor4d(heldOut.images, [heldOut.count, IMAGE_SIDE, IMAGE_SIDE, 3]);
  const vy = tf.oneHot(tf.tensor1d(heldOut.labels, "int32"), LABELS.length);

  const model = buildSmallCnn();
  model.compile({ optimizer: tf.train.adam(1e-3), loss: "categoricalCrossentropy", metrics: ["accuracy"] });
  // data is class-interleaved, so batches stay balanced without shuffling
  // and the run is reproducible
  await model.fit(xs, ys, {
    epochs,
    batchSize: 64,
    shuffle: false,
    verbose: 0,
    callbacks: {
      onEpochEnd: (epoch, logs) => {
        process.stdout.write(`epoch ${epoch + 1}/${epochs} loss=${logs?.loss?.toFixed(4)}\n`);
      },
    },
  });
  const evalOut = model.evaluate(vx, vy) as tf.Scalar[];
  const accuracy = (await evalOut[1].data())[0];
  process.stdout.write(`held-out accuracy ${accuracy.toFixed(4)} on ${heldOut.count} samples\n`);
  if (accuracy < minAcc) {
    process.stderr.write(`error: accuracy ${accuracy.toFixed(4)} below ${minAcc}\n`);
    return 1;
  }
  fs.mkdirSync(path.dirname(values.out!), { recursive: true });
  await saveModelJson(model, values.out!);
  process.stdout.write(`wrote ${values.out}\n`);
  return 0;
}

function cmdEvalTrend(args: string[]): number {
  const { values } = parseArgs({
    args,
    options: {
      records: { type: "string" },
      json: { type: "boolean", default: false },
    },
  });
  if (!values.records) {
    process.stderr.write("error: --records is required\n");
    return 1;
  }
  let text: string;
  try {
    text = fs.readFileSync(values.records, "utf-8");
  } catch (err) {
    process.stderr.write(`runtime error: ${(err as Error).message}\n`);
    return 2;
  }
  try {
    const report = evalTrend(text);
    process.stdout.write(
      (values.json ? JSON.stringify(report, null, 2) : formatTrendReport(report)) + "\n",
    );
    return 0;
  } catch (err) {
    if (err instanceof TrendError) {
      process.stderr.write(`error: ${err.message}\n`);
      return 1;
    }
    throw err;
  }
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    switch (command) {
      case "serve":
        return await cmdServe(rest);
      case "train":
        return await cmdTrain(rest);
      case "eval-trend":
        return cmdEvalTrend(rest);
      case "--help":
      case "help":
      case undefined:
        process.stdout.write(USAGE);
        return command ? 0 : 1;
      default:
        process.stderr.write(`error: unknown command '${command}'\n${USAGE}`);
        return 1;
    }
  } catch (err) {
    if (err instanceof TypeError && err.message.includes("option")) {
      process.stderr.write(`error: ${err.message}\n`);
      return 1;
    }
    process.stderr.write(`runtime error: ${(err as Error).stack ?? err}\n`);
    return 2;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
