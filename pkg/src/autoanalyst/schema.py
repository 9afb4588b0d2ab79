"""SQLite schema introspection and the DDL-style text shown to the model."""

from __future__ import annotations

import os
import sqlite3
from dataclasses import dataclass, field

from .errors import MissingDatabase, NotADatabase, UnreadableFile


@dataclass
class ColumnInfo:
    name: str
    type: str
    notnull: bool = False
    primary_key: bool = False


@dataclass
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@dataclass
class TableInfo:
    name: str
    columns: list[ColumnInfo] = field(default_factory=list)
    foreign_keys: list[ForeignKey] = field(default_factory=list)

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass
class DatabaseSchema:
    db_file_name: str
    tables: list[TableInfo] = field(default_factory=list)

    def table(self, name: str) -> TableInfo | None:
        lowered = name.lower()
        for t in self.tables:
            if t.name.lower() == lowered:
                return t
        return None

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]


def introspect(db_path: str) -> DatabaseSchema:
    """Read table, column and foreign-key structure from a SQLite file.

    Raises MissingDatabase / UnreadableFile / NotADatabase so callers can
    tell a bad path from a bad file. The returned schema remembers the
    database's base file name for prompt rendering.
    """
    if not os.path.exists(db_path):
        raise MissingDatabase(db_path)
    if not os.access(db_path, os.R_OK):
        raise UnreadableFile(db_path)
    conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    try:
        try:
            names = [
                r[0]
                for r in conn.execute(
                    "SELECT name FROM sqlite_master"
                    " WHERE type = 'table' AND name NOT LIKE 'sqlite_%'"
                )
            ]
        except sqlite3.DatabaseError as exc:
            raise NotADatabase(f"{db_path}: {exc}") from exc
        tables = []
        for name in names:
            cols = [
                ColumnInfo(
                    name=r[1],
                    type=r[2] or "",
                    notnull=bool(r[3]),
                    primary_key=bool(r[5]),
                )
                for r in conn.execute(f'PRAGMA table_info("{name}")')
            ]
            fks = [
                ForeignKey(column=r[3], ref_table=r[2], ref_column=r[4] or "")
                for r in conn.execute(f'PRAGMA foreign_key_list("{name}")')
            ]
            # pragma reports newest-first; creation order reads better
            fks.reverse()
            tables.append(TableInfo(name=name, columns=cols, foreign_keys=fks))
        return DatabaseSchema(db_file_name=os.path.basename(db_path), tables=tables)
    finally:
        conn.close()


def render_schema(schema: DatabaseSchema) -> str:
    """Render the schema as CREATE TABLE text, one statement per table."""
    parts = []
    for t in schema.tables:
        lines = [f"CREATE TABLE {t.name} ("]
        body = []
        for c in t.columns:
            decl = f"  {c.name} {c.type}".rstrip()
            if c.notnull:
                decl += " NOT NULL"
            body.append(decl)
        pks = [c.name for c in t.columns if c.primary_key]
        if pks:
            body.append(f"  PRIMARY KEY ({', '.join(pks)})")
        for fk in t.foreign_keys:
            ref = f"{fk.ref_table}({fk.ref_column})" if fk.ref_column else fk.ref_table
            body.append(f"  FOREIGN KEY ({fk.column}) REFERENCES {ref}")
        lines.append(",\n".join(body))
        lines.append(");")
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + ("\n" if parts else "")
