package com.example.time;

import java.awt.List;

public class Schedule {
    private final Range window;

    public Schedule(Range window) {
        this.window = window;
    }

    public long length() {
        return window.duration();
    }

    public List labels() {
        return new List();
    }
}
