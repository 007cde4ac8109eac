/**
 * Browser entry point. Plain DOM, no framework: a config form (base URL +
 * token), a trial picker, and the live conduct screen driven by ConsoleFlow.
 */

import { ApiError, Client, ConsoleConfig } from "./api.js";
import { ConsoleFlow } from "./flow.js";
import { Banner, TrialViewModel } from "./viewmodel.js";

const CONFIG_KEY = "phase12-console-config";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function loadConfig(): ConsoleConfig | null {
  try {
    const raw = localStorage.getItem(CONFIG_KEY);
    if (!raw) return null;
    const cfg = JSON.parse(raw);
    if (typeof cfg.baseUrl === "string" && typeof cfg.token === "string") return cfg;
  } catch {
    // fall through to the form
  }
  return null;
}

function app(): HTMLElement {
  return document.getElementById("app")!;
}

function renderConfigForm(): void {
  const base = el("input", { type: "text", placeholder: "http://localhost:8000", size: "40" });
  const token = el("input", { type: "password", placeholder: "bearer token", size: "40" });
  const existing = loadConfig();
  if (existing) {
    base.value = existing.baseUrl;
    token.value = existing.token;
  }
  const msg = el("p", { class: "error" });
  const go = el("button", {}, "Connect");
  go.onclick = async () => {
    const cfg: ConsoleConfig = { baseUrl: base.value.replace(/\/+$/, ""), token: token.value };
    const client = new Client(cfg);
    try {
      await client.health();
      await client.listTrials(); // fails fast on a bad token
      localStorage.setItem(CONFIG_KEY, JSON.stringify(cfg));
      renderTrialPicker(client);
    } catch (err) {
      msg.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  };
  app().replaceChildren(
    el("h1", {}, "Trial console"),
    el("p", {}, "Server base URL and access token:"),
    el("div", { class: "row" }, base),
    el("div", { class: "row" }, token),
    el("div", { class: "row" }, go),
    msg,
  );
}

function renderTrialPicker(client: Client): void {
  const list = el("ul");
  const msg = el("p", { class: "error" });
  const refresh = async () => {
    const { data } = await client.listTrials();
    list.replaceChildren(
      ...data.trials.map((t) => {
        const open = el("a", { href: "#" }, `${t.trial_id} (${t.phase})`);
        open.onclick = (e) => {
          e.preventDefault();
          openTrial(client, t.trial_id);
        };
        return el("li", {}, open);
      }),
    );
  };
  const configBox = el("textarea", { rows: "10", cols: "70", placeholder: "trial config JSON" });
  const idBox = el("input", { type: "text", placeholder: "trial id (optional)" });
  const create = el("button", {}, "Create trial");
  create.onclick = async () => {
    try {
      const snap = await client.createTrial(
        JSON.parse(configBox.value),
        idBox.value.trim() || undefined,
      );
      openTrial(client, snap.data.trial_id);
    } catch (err) {
      msg.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
  };
  app().replaceChildren(
    el("h1", {}, "Trials"),
    list,
    el("h2", {}, "New trial"),
    el("div", { class: "row" }, configBox),
    el("div", { class: "row" }, idBox, create),
    msg,
  );
  void refresh();
}

function gaugeBar(fraction: number, crossed: boolean): HTMLElement {
  const fill = el("div", {
    class: `gauge-fill${crossed ? " crossed" : ""}`,
    style: `width:${(fraction * 100).toFixed(1)}%`,
  });
  return el("div", { class: "gauge-track" }, fill);
}

function bannerNode(b: Banner): HTMLElement {
  const cls = b.verdict === "reject_h0" ? "banner reject" : "banner accept";
  return el("div", { class: cls }, el("strong", {}, b.text), el("span", { class: "dim" }, ` ${b.at}`));
}

function openTrial(client: Client, trialId: string): void {
  const banners = el("div");
  const conflictBox = el("div", { class: "conflict", style: "display:none" });
  const status = el("div");
  const gauges = el("div");
  const tables = el("div");
  const entry = el("div");
  const whatIf = el("div");
  const errBox = el("p", { class: "error" });

  // hypothetical outcomes for the what-if panel (client-side list only;
  // statistics always come from the project endpoint)
  const hypo: { tox: number; eff: number }[] = [];
  const projOut = el("pre", { class: "proj" });

  const flow = new ConsoleFlow(client, trialId, {
    onUpdate: (vm) => render(vm),
    onConflict: (message) => {
      conflictBox.textContent = message;
      conflictBox.style.display = "block";
    },
  });

  function render(vm: TrialViewModel): void {
    // banners are append-only on screen: the event log is the source, so a
    // rebuild never removes one
    banners.replaceChildren(...vm.banners.map(bannerNode));

    status.replaceChildren(
      el("h1", {}, `Trial ${vm.trialId}`),
      el(
        "p",
        {},
        `phase: ${vm.phase} | enrolled ${vm.enrolled}/${vm.maxN} (phase I: ${vm.m}) | ` +
          `analyses at n = ${vm.analysisAt.join(", ")} | version ${vm.version}` +
          (vm.hasAdvisory ? " | advisory recomputation present" : ""),
      ),
      vm.pending
        ? el(
            "p",
            { class: "pending" },
            `next: patient ${vm.pending.patientIdx} at dose `,
            el("strong", {}, vm.pending.doseRaw),
          )
        : el("p", { class: "pending" }, "no patient awaiting an outcome"),
      vm.etaHatRaw !== null
        ? el("p", {}, "current MTD estimate: ", el("strong", {}, vm.etaHatRaw))
        : el("p", {}, "Phase I in progress, no estimate yet"),
    );

    gauges.replaceChildren(
      el("h2", {}, "Stopping boundaries"),
      ...vm.gauges.map((g) =>
        el(
          "div",
          { class: "gauge" },
          el(
            "div",
            {},
            `${g.label}: ${g.statRaw ?? "(no analysis yet)"} / ${g.thresholdRaw} ` +
              `[${g.scale} scale]`,
          ),
          gaugeBar(g.fraction, g.crossed),
        ),
      ),
    );

    const analysisRows = vm.analyses.map((a) =>
      el(
        "tr",
        {},
        el("td", {}, String(a.k)),
        el("td", {}, String(a.n)),
        el("td", {}, a.etaRaw),
        el("td", {}, a.l0Raw),
        el("td", {}, a.l1Raw),
        el("td", {}, a.pHatRaw),
      ),
    );
    const etaCells = vm.etaSeries.map((p) => el("td", {}, p.etaRaw));
    const levelTable = vm.levels
      ? el(
          "table",
          {},
          el(
            "tr",
            {},
            el("th", {}, "dose"),
            el("th", {}, "n"),
            el("th", {}, "tox"),
            el("th", {}, "eff"),
          ),
          ...vm.levels.map((lv) =>
            el(
              "tr",
              {},
              el("td", {}, lv.doseRaw),
              el("td", {}, String(lv.n)),
              el("td", {}, String(lv.tox)),
              el("td", {}, String(lv.eff)),
            ),
          ),
        )
      : el("p", { class: "dim" }, "continuous dosing, no level table");
    tables.replaceChildren(
      el("h2", {}, "Interim analyses"),
      el(
        "table",
        {},
        el(
          "tr",
          {},
          el("th", {}, "k"),
          el("th", {}, "n"),
          el("th", {}, "eta_hat"),
          el("th", {}, "l0"),
          el("th", {}, "l1"),
          el("th", {}, "p_hat"),
        ),
        ...analysisRows,
      ),
      el("h2", {}, "MTD estimate history"),
      el(
        "table",
        {},
        el("tr", {}, ...vm.etaSeries.map((p) => el("th", {}, `k=${p.k}`))),
        el("tr", {}, ...etaCells),
      ),
      el("h2", {}, "Dose levels"),
      levelTable,
    );

    renderEntry(vm);
    renderWhatIf(vm);
  }

  function renderEntry(vm: TrialViewModel): void {
    if (vm.pending === null) {
      entry.replaceChildren(el("h2", {}, "Outcome entry"), el("p", {}, "trial complete"));
      return;
    }
    const tox = el("select", {}, el("option", { value: "0" }, "no toxicity"), el("option", { value: "1" }, "toxicity"));
    const eff = el("select", {}, el("option", { value: "0" }, "no response"), el("option", { value: "1" }, "response"));
    const submit = el("button", {}, `Record outcome for patient ${vm.pending.patientIdx}`);
    submit.onclick = async () => {
      submit.disabled = true; // double clicks also land on the server idempotently
      errBox.textContent = "";
      conflictBox.style.display = "none";
      const res = await flow.submitOutcome(Number(tox.value), Number(eff.value));
      submit.disabled = false;
      if (!res.ok && !res.conflict) {
        errBox.textContent = `${res.error.code}: ${res.error.message}` +
          (res.error.field ? ` (${res.error.field})` : "");
      }
    };
    entry.replaceChildren(el("h2", {}, "Outcome entry"), el("div", { class: "row" }, tox, eff, submit));
  }

  function renderWhatIf(vm: TrialViewModel): void {
    const title = el("h2", {}, "What-if projection ");
    title.append(el("span", { class: "nonbinding" }, "NON-BINDING"));
    if (!vm.whatIfEnabled) {
      whatIf.replaceChildren(title, el("p", { class: "dim" }, "trial terminated, projections disabled"));
      return;
    }
    const listNode = el(
      "p",
      {},
      hypo.length === 0
        ? "no hypothetical outcomes (projects current statistics)"
        : hypo.map((h) => `(tox=${h.tox}, eff=${h.eff})`).join(" "),
    );
    const addBtn = (label: string, tox: number, eff: number) => {
      const b = el("button", {}, label);
      b.onclick = () => {
        hypo.push({ tox, eff });
        renderWhatIf(vm);
      };
      return b;
    };
    const clear = el("button", {}, "clear");
    clear.onclick = () => {
      hypo.length = 0;
      projOut.textContent = "";
      renderWhatIf(vm);
    };
    const run = el("button", {}, "Project");
    run.onclick = async () => {
      try {
        const proj = await flow.whatIf([...hypo]);
        projOut.textContent = proj
          ? proj.text // verbatim server payload
          : "no hypothetical outcomes: the current statistics above apply";
      } catch (err) {
        projOut.textContent =
          err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      }
    };
    whatIf.replaceChildren(
      title,
      listNode,
      el(
        "div",
        { class: "row" },
        addBtn("+ response", 0, 1),
        addBtn("+ no response", 0, 0),
        addBtn("+ tox & response", 1, 1),
        addBtn("+ tox, no response", 1, 0),
        clear,
        run,
      ),
      projOut,
    );
  }

  app().replaceChildren(banners, conflictBox, status, gauges, entry, whatIf, tables, errBox);
  void flow.refresh().catch((err) => {
    errBox.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
  });
  flow.startPolling();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const cfg = loadConfig();
  if (cfg) renderTrialPicker(new Client(cfg));
  else renderConfigForm();
}
