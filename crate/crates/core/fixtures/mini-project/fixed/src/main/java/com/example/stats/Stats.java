package com.example.stats;

import com.example.calc.Calc;
import com.example.geo.Range;
import java.util.List;

public class Stats {
    public static Range span(Calc calc) {
        return new Range(calc.first(), calc.last());
    }

    public static int count(List<Integer> values) {
        return values.size();
    }
}
