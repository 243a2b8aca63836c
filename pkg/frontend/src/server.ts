/** Transports for the oracle protocol.
 *
 * stdio answers strictly one request per line in order; HTTP accepts
 * concurrent POSTs but inference itself is serialized through a promise
 * chain, so responses stay deterministic.
 */

import * as http from "node:http";
import * as readline from "node:readline";

import { ServedModel } from "./model";
import { handleLine, handleRequest, JsonObject } from "./protocol";

export function serveStdio(model: ServedModel, done?: () => void): void {
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  rl.on("line", (line) => {
    if (!line.trim()) return;
    process.stdout.write(JSON.stringify(handleLine(model, line.trim())) + "\n");
  });
  rl.on("close", () => done?.());
}

export function makeHttpServer(model: ServedModel): http.Server {
  let queue: Promise<unknown> = Promise.resolve();
  return http.createServer((req, res) => {
    if (req.method !== "POST" || req.url !== "/v1/oracle") {
      res.writeHead(404, { "Content-Type": "text/plain" });
      res.end("only POST /v1/oracle is served\n");
      return;
    }
    const chunks: Buffer[] = [];
    req.on("data", (c) => chunks.push(c));
    req.on("end", () => {
      queue = queue.then(() => {
        let resp: JsonObject;
        try {
          resp = handleRequest(model, JSON.parse(Buffer.concat(chunks).toString("utf-8")));
        } catch {
          resp = { error: { code: "protocol", message: "request body is not valid JSON" } };
        }
        const body = JSON.stringify(resp);
        res.writeHead(200, { "Content-Type": "application/json" });
        res.end(body);
      });
    });
  });
}
