// SQL console view: free-form SELECT box, predefined query menu with typed
// parameter inputs, result table with truncation notice and CSV download,
// and an inline error banner that never takes the app down.

import { QueryController } from "./controllers.js";
import { buildCsv } from "./csv.js";
import { PREDEFINED_QUERIES } from "./state.js";

export class QueryView {
  private controller: QueryController;
  private sqlInput: HTMLTextAreaElement;
  private runButton: HTMLButtonElement;
  private predefinedSelect: HTMLSelectElement;
  private paramInputs: HTMLElement;
  private runPredefinedButton: HTMLButtonElement;
  private banner: HTMLElement;
  private tableHost: HTMLElement;
  private notice: HTMLElement;
  private downloadButton: HTMLButtonElement;

  constructor(controller: QueryController, root: HTMLElement) {
    this.controller = controller;
    this.sqlInput = root.querySelector("#sql-input") as HTMLTextAreaElement;
    this.runButton = root.querySelector("#run-sql") as HTMLButtonElement;
    this.predefinedSelect = root.querySelector("#predefined-select") as HTMLSelectElement;
    this.paramInputs = root.querySelector("#predefined-params") as HTMLElement;
    this.runPredefinedButton = root.querySelector("#run-predefined") as HTMLButtonElement;
    this.banner = root.querySelector("#query-error") as HTMLElement;
    this.tableHost = root.querySelector("#result-table") as HTMLElement;
    this.notice = root.querySelector("#result-notice") as HTMLElement;
    this.downloadButton = root.querySelector("#download-csv") as HTMLButtonElement;

    for (const spec of PREDEFINED_QUERIES) {
      const option = document.createElement("option");
      option.value = spec.name;
      option.textContent = spec.label;
      this.predefinedSelect.appendChild(option);
    }
    this.predefinedSelect.addEventListener("change", () => this.renderParamInputs());
    this.renderParamInputs();

    this.runButton.addEventListener("click", () => {
      void this.controller.runSql(this.sqlInput.value);
    });
    this.sqlInput.addEventListener("keydown", (event) => {
      if ((event.ctrlKey || event.metaKey) && event.key === "Enter") {
        void this.controller.runSql(this.sqlInput.value);
      }
    });
    this.runPredefinedButton.addEventListener("click", () => {
      const spec = PREDEFINED_QUERIES.find((s) => s.name === this.predefinedSelect.value);
      if (!spec) return;
      const params: Record<string, string> = {};
      for (const param of spec.params) {
        const input = this.paramInputs.querySelector(
          `[data-param="${param.key}"]`
        ) as HTMLInputElement;
        params[param.key] = input.value.trim();
      }
      void this.controller.runPredefined(spec.name, params);
    });
    this.downloadButton.addEventListener("click", () => this.downloadCsv());

    controller.subscribe(() => this.render());
    this.render();
  }

  private renderParamInputs(): void {
    const spec = PREDEFINED_QUERIES.find((s) => s.name === this.predefinedSelect.value);
    this.paramInputs.innerHTML = "";
    if (!spec) return;
    for (const param of spec.params) {
      const label = document.createElement("label");
      label.textContent = param.label;
      const input = document.createElement("input");
      input.type = "text";
      input.placeholder = param.placeholder;
      input.dataset.param = param.key;
      label.appendChild(input);
      this.paramInputs.appendChild(label);
    }
  }

  private render(): void {
    const { busy, error, result } = this.controller.state;
    this.runButton.disabled = busy;
    this.runPredefinedButton.disabled = busy;
    this.banner.classList.toggle("hidden", !error);
    this.banner.textContent = error ?? "";

    this.tableHost.innerHTML = "";
    this.downloadButton.disabled = !result || result.rows.length === 0;
    if (!result) {
      this.notice.textContent = busy ? "Running…" : "";
      return;
    }
    this.notice.textContent = result.truncated
      ? `${result.row_count} rows (truncated at the row cap)`
      : `${result.row_count} row${result.row_count === 1 ? "" : "s"}`;

    const table = document.createElement("table");
    const head = table.createTHead().insertRow();
    for (const column of result.columns) {
      const cell = document.createElement("th");
      cell.textContent = column;
      head.appendChild(cell);
    }
    const body = table.createTBody();
    for (const row of result.rows) {
      const tr = body.insertRow();
      for (const value of row) {
        tr.insertCell().textContent = value === null ? "" : String(value);
      }
    }
    this.tableHost.appendChild(table);
  }

  private downloadCsv(): void {
    const result = this.controller.state.result;
    if (!result) return;
    const blob = new Blob([buildCsv(result.columns, result.rows)], {
      type: "text/csv;charset=utf-8",
    });
    const url = URL.createObjectURL(blob);
    const anchor = document.createElement("a");
    anchor.href = url;
    anchor.download = "query-results.csv";
    anchor.click();
    URL.revokeObjectURL(url);
  }
}
